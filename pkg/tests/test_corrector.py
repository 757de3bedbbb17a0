import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shoal.bathymetry import (
    BathymetryProfile,
    BumpSuperpositionSpec,
    PeriodicSpec,
    gen_bathymetry,
    spectrum_support,
)
from shoal.corrector import (
    CorrectorField,
    CorrectorTable,
    compose_slow_fast,
    convolution_oracle,
    corrector_residual,
    partition_of_unity,
    solve_corrector,
)
from shoal.resonance import ParameterBox, build_symbol_K, dispersion_denominator
from shoal.spectral import Grid1D, SpectralField, loglog_slope, spectral_derivative

K = 2 * np.pi
BOX = ParameterBox((0.8, 1.2), (-0.3, 0.3))


@pytest.fixture(scope="module")
def cos_profile():
    return gen_bathymetry(PeriodicSpec([K], [1.0], n=64, length=1.0))


@pytest.fixture(scope="module")
def symbol(cos_profile):
    return build_symbol_K(spectrum_support(cos_profile), BOX, alpha_star=0.05)


@pytest.fixture(scope="module")
def band_setup():
    prof = gen_bathymetry(BumpSuperpositionSpec(seed=1, n=512, length=64.0))
    box = ParameterBox((0.9, 1.1), (-0.2, 0.2))
    return prof, build_symbol_K(spectrum_support(prof), box)


def amplitude(k, h, V):
    return -V * k / np.cosh(h * k) / ((V * k) ** 2 - k * np.tanh(h * k))


class TestSolve:
    def test_closed_form_single_mode(self, cos_profile, symbol):
        c = solve_corrector(cos_profile, 0.3, 1.0, symbol)
        y = cos_profile.grid.nodes
        assert np.max(np.abs(c.psi_c.values - amplitude(K, 1.0, 0.3) * np.sin(K * y))) < 1e-14

    def test_zeta_relation(self, cos_profile, symbol):
        c = solve_corrector(cos_profile, -0.2, 0.9, symbol)
        expect = 0.2 * spectral_derivative(c.psi_c).values
        assert np.max(np.abs(c.zeta_c.values - expect)) <= 1e-10 * np.max(np.abs(expect))

    def test_real_and_zero_mean(self, band_setup):
        prof, k = band_setup
        c = solve_corrector(prof, 0.15, 1.0, k)
        assert c.psi_c.is_real and c.zeta_c.is_real
        assert abs(c.psi_c.mean()) < 1e-10 and abs(c.zeta_c.mean()) < 1e-10

    def test_zero_velocity(self, cos_profile, symbol):
        c = solve_corrector(cos_profile, 0.0, 1.0, symbol)
        assert np.all(c.psi_c.values == 0) and np.all(c.zeta_c.values == 0)

    def test_zero_bottom(self, cos_profile, symbol):
        flat = BathymetryProfile(SpectralField.zeros(cos_profile.grid), 0.0, "periodic")
        c = solve_corrector(flat, 0.3, 1.0, symbol)
        assert np.all(c.psi_c.values == 0)
        assert corrector_residual(c, flat) == 0.0

    def test_outside_box_rejected(self, cos_profile, symbol):
        with pytest.raises(ValueError, match="outside the certified box"):
            solve_corrector(cos_profile, 0.5, 1.0, symbol)

    @settings(max_examples=15, deadline=None)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3))
    def test_linear_in_bottom(self, a, b):
        g1 = gen_bathymetry(PeriodicSpec([K, 3 * K], [1.0, 0.3], n=64, length=1.0))
        g2 = gen_bathymetry(PeriodicSpec([K, 3 * K], [-0.4, 0.7], n=64, length=1.0))
        k = build_symbol_K(spectrum_support(g1), BOX, check=False)
        mix = BathymetryProfile(a * g1.field + b * g2.field, 0.0, "periodic")
        lhs = solve_corrector(mix, 0.2, 1.0, k).psi_c.values
        rhs = a * solve_corrector(g1, 0.2, 1.0, k).psi_c.values + b * solve_corrector(g2, 0.2, 1.0, k).psi_c.values
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


class TestResidual:
    def test_discrete_exact(self, cos_profile, symbol):
        for V, h in [(0.3, 1.0), (-0.1, 0.85), (0.25, 1.2)]:
            assert corrector_residual(solve_corrector(cos_profile, V, h, symbol), cos_profile) <= 1e-10

    def test_band_exact(self, band_setup):
        prof, k = band_setup
        assert corrector_residual(solve_corrector(prof, 0.2, 1.0, k), prof) <= 1e-8

    def test_detects_perturbation(self, cos_profile, symbol):
        c = solve_corrector(cos_profile, 0.3, 1.0, symbol)
        y = cos_profile.grid.nodes
        delta = 1e-3
        bad = CorrectorField(c.psi_c + delta * np.sin(K * y), c.zeta_c, c.params)
        res = corrector_residual(bad, cos_profile)
        # per mode the scalar equation sees delta |D(k)| and the first line, with the
        # stale zeta_c, sees delta k tanh(k); both against the forcing V k sech(k)
        forcing = 0.3 * K / np.cosh(K)
        expected = delta * max(abs(dispersion_denominator(K, 0.3, 1.0)), K * np.tanh(K)) / forcing
        assert res > 1e-6
        assert res == pytest.approx(expected, rel=1e-6)


class TestOracle:
    @pytest.mark.parametrize("windows", [1, 2, 3, 5])
    def test_matches_spectral(self, cos_profile, symbol, windows):
        c = solve_corrector(cos_profile, 0.3, 1.0, symbol)
        o = convolution_oracle(cos_profile, 0.3, 1.0, symbol, windows=windows)
        assert np.linalg.norm(o.psi_c.values - c.psi_c.values) <= 1e-8 * np.linalg.norm(c.psi_c.values)
        assert np.linalg.norm(o.zeta_c.values - c.zeta_c.values) <= 1e-8 * np.linalg.norm(c.zeta_c.values)

    def test_band_two_windows(self, band_setup):
        prof, k = band_setup
        c = solve_corrector(prof, -0.1, 1.05, k)
        o = convolution_oracle(prof, -0.1, 1.05, k, windows=2)
        assert np.linalg.norm(o.psi_c.values - c.psi_c.values) <= 1e-6 * np.linalg.norm(c.psi_c.values)

    def test_zero_bottom(self, cos_profile, symbol):
        flat = BathymetryProfile(SpectralField.zeros(cos_profile.grid), 0.0, "periodic")
        assert np.all(convolution_oracle(flat, 0.3, 1.0, symbol).psi_c.values == 0)

    def test_size_limit(self, symbol):
        big = gen_bathymetry(PeriodicSpec([K], [1.0], n=1024, length=1.0))
        with pytest.raises(ValueError, match="exceeds"):
            convolution_oracle(big, 0.3, 1.0, symbol)

    @pytest.mark.parametrize("w", [1, 2, 4, 7])
    def test_partition_sums_to_one(self, w):
        omega = partition_of_unity(Grid1D(128, 3.0), w)
        assert np.allclose(omega.sum(axis=0), 1.0, atol=1e-14)
        assert np.all(omega >= 0)


class TestCompose:
    @pytest.fixture
    def slow(self):
        return Grid1D(1024, 8.0)

    def test_frozen_parameters(self, cos_profile, symbol, slow):
        gam = 0.125
        h0 = SpectralField(slow, np.full(slow.n, 1.0))
        V0 = SpectralField(slow, np.full(slow.n, 0.3))
        psi1, zeta1 = compose_slow_fast(CorrectorTable(cos_profile, symbol), h0, V0, gam)
        y = slow.nodes / gam
        assert np.allclose(psi1.values, amplitude(K, 1.0, 0.3) * np.sin(K * y), atol=1e-13)

    def test_zero_velocity(self, cos_profile, symbol, slow):
        h0 = SpectralField(slow, 1 + 0.1 * np.sin(2 * np.pi * slow.nodes / 8))
        psi1, zeta1 = compose_slow_fast(CorrectorTable(cos_profile, symbol), h0, SpectralField.zeros(slow), 0.1)
        assert np.all(psi1.values == 0) and np.all(zeta1.values == 0)

    def test_gradient_scaling(self, cos_profile, symbol):
        g = Grid1D(4096, 8.0, origin=-4.0)
        h0 = SpectralField(g, 1 + 0.1 * np.exp(-g.nodes**2))
        V0 = SpectralField(g, 0.2 * np.exp(-g.nodes**2))
        table = CorrectorTable(cos_profile, symbol)
        gammas = [2.0**-j for j in range(3, 7)]
        norms = [spectral_derivative(compose_slow_fast(table, h0, V0, gm)[0]).l2() for gm in gammas]
        assert loglog_slope(gammas, norms)[0] == pytest.approx(-1.0, abs=0.1)

    def test_excursion_names_point(self, cos_profile, symbol, slow):
        V0 = SpectralField(slow, np.where(slow.nodes > 5.0, 0.5, 0.0))
        with pytest.raises(ValueError, match="x=5"):
            compose_slow_fast(CorrectorTable(cos_profile, symbol), SpectralField(slow, np.ones(slow.n)), V0, 0.1)

    def test_unresolved_gamma(self, cos_profile, symbol, slow):
        with pytest.raises(ValueError, match="under-resolved"):
            compose_slow_fast(CorrectorTable(cos_profile, symbol), SpectralField(slow, np.ones(slow.n)),
                              SpectralField.zeros(slow), 0.001)

    def test_table_matches_exact_for_bands(self, band_setup):
        prof, k = band_setup
        g = Grid1D(2048, 50.0)
        h0 = SpectralField(g, 1 + 0.05 * np.sin(2 * np.pi * g.nodes / 50))
        V0 = SpectralField(g, 0.15 * np.cos(2 * np.pi * g.nodes / 50))
        tab = CorrectorTable(prof, k)
        assert tab.mode == "tabulated" and tab.interpolation_error < 1e-6
        a, _ = compose_slow_fast(tab, h0, V0, 0.25)
        b, _ = compose_slow_fast(CorrectorTable(prof, k, mode="exact"), h0, V0, 0.25)
        assert np.max(np.abs(a.values - b.values)) < 1e-6

    def test_fast_relation_with_frozen_parameters(self, cos_profile, symbol, slow):
        # zeta1 + V0 d_y psi1 = 0 when the parameters are constant
        table = CorrectorTable(cos_profile, symbol)
        y = slow.nodes / 0.125
        psi_y, _ = table.evaluate(y, 0.25, 1.1, dy=1)
        _, zeta = table.evaluate(y, 0.25, 1.1)
        assert np.max(np.abs(zeta + 0.25 * psi_y)) <= 1e-10 * np.max(np.abs(zeta))
