import dataclasses

import numpy as np
import pytest

from shoal.bathymetry import PeriodicSpec, gen_bathymetry, spectrum_support
from shoal.consistency import (
    ConsistencyScenario,
    assemble_ansatz,
    convergence_study,
    e21_split,
    rate_verdict,
    residual_E1,
    residual_E2,
)
from shoal.corrector import CorrectorTable
from shoal.effective import EffectiveState, parameter_hull, run_effective
from shoal.resonance import build_symbol_K
from shoal.spectral import Grid1D, SpectralField


@pytest.fixture(scope="module")
def profile():
    return gen_bathymetry(PeriodicSpec([2.0], [0.5], n=64, length=2 * np.pi))


def setup(scn, mu, shift=0, steps=60):
    """Trajectory, corrector table and time grid for one value of ``mu``."""
    grid = scn.slow_grid(mu)
    init = scn.initial_state(grid)
    if shift:
        init = EffectiveState(SpectralField(grid, np.roll(init.zeta0.values, shift)),
                              SpectralField(grid, np.roll(init.V0.values, shift)))
    traj = run_effective(init, steps * scn.dt, scn.dt)
    table = None
    if scn.profile is not None:
        box = parameter_hull(traj, scn.margin)
        support = spectrum_support(scn.profile, scn.threshold, scn.kappa)
        table = CorrectorTable(scn.profile, build_symbol_K(support, box, alpha_star=scn.alpha_star))
    return traj, table


def residuals(traj, table, mu, t, nz=64):
    pair = assemble_ansatz(traj.state_at(t), table, mu)
    return residual_E1(pair, traj, t, nz)[1], residual_E2(pair, traj, t, nz)[1]


class TestAnsatz:
    def test_flat_bottom_is_effective_state(self):
        g = Grid1D(128, 20.0, origin=-10.0)
        s = ConsistencyScenario(None, n=128, slow_length=20.0).initial_state(g)
        pair = assemble_ansatz(s, None, 0.01)
        assert np.array_equal(pair.zeta2s.values, s.zeta0.values)
        assert np.array_equal(pair.psi2s.values, s.psi0.values)

    def test_orders(self, profile):
        scn = ConsistencyScenario(profile, n=512)
        mu = 2.0**-4
        traj, table = setup(scn, mu, steps=4)
        st = traj.states[0]
        pair = assemble_ansatz(st, table, mu)
        dz = np.max(np.abs(pair.zeta2s.values - st.zeta0.values))
        dp = np.max(np.abs(pair.psi2s.values - st.psi0.values))
        assert dz <= np.sqrt(mu) * np.max(np.abs(pair.zeta1)) * (1 + 1e-12)
        assert dp <= mu * np.max(np.abs(pair.psi1)) * (1 + 1e-12)
        assert dz > 0 and dp > 0

    def test_constant_state_is_fast_oscillation(self, profile):
        mu = 2.0**-4
        scn = ConsistencyScenario(profile, n=512)
        g = scn.slow_grid(mu)
        s = EffectiveState(SpectralField(g, np.full(g.n, 0.05)), SpectralField.zeros(g))
        traj = run_effective(s, 0.01, 0.005)
        support = spectrum_support(profile, scn.threshold, scn.kappa)
        table = CorrectorTable(profile, build_symbol_K(support, parameter_hull(traj, 0.05), alpha_star=0.05))
        pair = assemble_ansatz(s, table, mu)
        # one slow-box cell of the fast period repeats exactly
        period = g.n * np.sqrt(mu) * profile.grid.length / g.length
        assert period == pytest.approx(round(period))
        z = pair.zeta2s.values
        assert np.allclose(z, np.roll(z, int(round(period))), atol=1e-12)

    def test_invalid_mu(self):
        g = Grid1D(16, 1.0)
        with pytest.raises(ValueError):
            assemble_ansatz(EffectiveState(SpectralField.zeros(g), SpectralField.zeros(g)), None, 0.0)


class TestResiduals:
    def test_constant_state_flat(self):
        g = Grid1D(128, 20.0)
        s = EffectiveState(SpectralField(g, np.full(128, 0.1)), SpectralField.zeros(g))
        traj = run_effective(s, 0.05, 0.005)
        e1, e2 = residuals(traj, None, 0.1, 0.02)
        assert e1 < 1e-10 and e2 < 1e-10

    def test_gauge_invariance(self, profile):
        mu = 2.0**-4
        scn = ConsistencyScenario(profile, n=512)
        traj, table = setup(scn, mu, steps=10)
        t = 0.025
        pair = assemble_ansatz(traj.state_at(t), table, mu)
        shifted = dataclasses.replace(pair, psi2s=pair.psi2s + 3.7, _cache={})
        a = residual_E1(pair, traj, t, 64)[1], residual_E2(pair, traj, t, 64)[1]
        b = residual_E1(shifted, traj, t, 64)[1], residual_E2(shifted, traj, t, 64)[1]
        assert a[0] == pytest.approx(b[0], abs=1e-10)
        assert a[1] == pytest.approx(b[1], abs=1e-10)

    def test_translation_invariance(self, profile):
        mu = 2.0**-4
        scn = ConsistencyScenario(profile, n=512)
        g = scn.slow_grid(mu)
        cell = int(round(g.n * np.sqrt(mu) * profile.grid.length / g.length))
        base = residuals(*setup(scn, mu, steps=10), mu, 0.025)
        moved = residuals(*setup(scn, mu, shift=3 * cell, steps=10), mu, 0.025)
        assert moved[0] == pytest.approx(base[0], abs=1e-8)
        assert moved[1] == pytest.approx(base[1], abs=1e-8)

    def test_vertical_refinement(self, profile):
        mu = 2.0**-4
        scn = ConsistencyScenario(profile, n=1024)
        traj, table = setup(scn, mu, steps=10)
        coarse = residuals(traj, table, mu, 0.025, nz=128)
        fine = residuals(traj, table, mu, 0.025, nz=256)
        for c, f in zip(coarse, fine):
            assert abs(c - f) < 0.05 * f

    def test_missing_frames(self, profile):
        mu = 2.0**-4
        traj, table = setup(ConsistencyScenario(profile, n=512), mu, steps=4)
        pair = assemble_ansatz(traj.states[0], table, mu)
        with pytest.raises(KeyError, match="frames"):
            residual_E1(pair, traj, 0.0, 32)

    def test_split_tracks_second_residual(self, profile):
        mu = 2.0**-5
        traj, table = setup(ConsistencyScenario(profile, n=1024), mu, steps=10)
        pair = assemble_ansatz(traj.state_at(0.025), table, mu)
        e2 = residual_E2(pair, traj, 0.025, 64)[1]
        assert e21_split(pair, traj, 0.025) == pytest.approx(e2, rel=0.5)
        assert e21_split(assemble_ansatz(traj.states[2], None, mu), traj, 0.01) == 0.0


class TestRateVerdict:
    MU = [2.0**-j for j in range(4, 10)]

    def test_exact_power(self):
        slope, C, ok = rate_verdict(self.MU, [2 * m**0.5 for m in self.MU], 0.375)
        assert slope == pytest.approx(0.5) and ok
        assert C == pytest.approx(2 * (2.0**-4) ** 0.125)

    def test_slow_slope_fails(self):
        _, _, ok = rate_verdict(self.MU, [m**0.2 for m in self.MU], 0.375)
        assert not ok

    def test_within_tolerance(self):
        # a large top point lifts the envelope, so a fitted slope just under the rate passes
        err = [m**0.3 for m in self.MU]
        err[0] *= 1.35
        slope, _, ok = rate_verdict(self.MU, err, 0.375)
        assert 0.275 <= slope < 0.375 and ok

    def test_point_above_envelope_fails(self):
        err = [m for m in self.MU]
        err[3] *= 50
        slope, _, ok = rate_verdict(self.MU, err, 0.375)
        assert slope >= 0.275 and not ok

    def test_all_zero(self):
        assert rate_verdict(self.MU, [0.0] * 6, 0.75)[2]


class TestStudy:
    def test_flat_bottom_first_order(self):
        scn = ConsistencyScenario(None, n=256)
        mus = [2.0**-j for j in range(4, 10)]
        rep = convergence_study(scn, mus, [0.25, 0.5, 0.75])
        e1 = np.array(rep.E1_L2)
        # local rates approach one from below as the higher-order terms fade
        local = np.log2(e1[:-1] / e1[1:])
        assert np.all(np.diff(local) > 0) and local[-1] >= 0.99
        assert rep.fitted_slope_E1 >= 1 - 0.1
        assert rep.fitted_slope_E2 >= 1 - 0.1
        assert rep.pass_E1 and rep.pass_E2
        assert rep.details["E21_Hhalf"] == [0.0] * 6

    def test_resonant_not_applicable(self, profile):
        # the single bottom mode k=2 is Bragg-resonant for a flow near V=0.5
        scn = ConsistencyScenario(profile, n=512, velocity_amplitude=0.0, amplitude=0.0)
        scn.initial_state = lambda grid: EffectiveState(
            SpectralField.zeros(grid), SpectralField(grid, 0.0 * grid.nodes))
        bad = gen_bathymetry(PeriodicSpec([3.997302692060316], [0.5], n=64,
                                          length=8 * np.pi / 3.997302692060316))
        scn.profile = bad
        scn.margin = 0.6
        rep = convergence_study(scn, [2.0**-4, 2.0**-5], [0.02])
        assert rep.status == "not applicable"
        assert "reason" in rep.details and rep.E1_L2 == []

    def test_needs_two_mu(self):
        with pytest.raises(ValueError):
            convergence_study(ConsistencyScenario(None, n=64), [0.1], [0.1])

    def test_report_dict(self):
        rep = convergence_study(ConsistencyScenario(None, n=128), [2.0**-4, 2.0**-5], [0.05])
        d = rep.to_dict()
        assert d["status"] == "ok" and len(d["E1_L2"]) == 2
