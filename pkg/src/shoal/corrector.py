"""Correctors of the fast-variable system and their slow-fast composition.

For frozen slow parameters ``(V, h)`` the corrector potential is the Fourier
multiplier ``psi_c_hat = V K0(xi, V, h) b_hat`` and ``zeta_c = -V d_y psi_c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .bathymetry import BathymetryProfile
from .resonance import SymbolK, dispersion_denominator
from .spectral import Grid1D, SpectralField, apply_multiplier


@dataclass(frozen=True, eq=False)
class CorrectorField:
    psi_c: SpectralField
    zeta_c: SpectralField
    params: tuple[float, float]  # (V, h)
    source_profile: Optional[BathymetryProfile] = None

    @property
    def grid(self) -> Grid1D:
        return self.psi_c.grid

    def dump(self, stem) -> tuple[Path, Path]:
        from .io import write_columns, write_json

        stem = Path(stem)
        cols = write_columns(
            stem.with_suffix(".dat"),
            ["y", "psi_c", "zeta_c"],
            [self.grid.nodes, np.real(self.psi_c.values), np.real(self.zeta_c.values)],
        )
        side = write_json(stem.with_suffix(".json"), {"V": self.params[0], "h": self.params[1], "n": self.grid.n,
                                                       "length": self.grid.length})
        return cols, side


def _check_params(k: SymbolK, V: float, h: float) -> None:
    if not bool(k.box.contains(V, h)):
        raise ValueError(f"parameters (V={V}, h={h}) lie outside the certified box {k.box.to_dict()}")


def _real_if_hermitian(grid: Grid1D, spec: np.ndarray) -> SpectralField:
    return SpectralField.from_spectrum(grid, spec, real=True)


def solve_corrector(b: BathymetryProfile, V: float, h: float, k: SymbolK) -> CorrectorField:
    """Spectral corrector ``psi_c_hat = V K0 b_hat`` and ``zeta_c = -V d_y psi_c``."""
    _check_params(k, V, h)
    g = b.grid
    mult = V * k.evaluator(g.xi, V, h)
    psi_hat = mult * b.field.spectrum
    zeta_hat = -V * 1j * g.xi * psi_hat
    return CorrectorField(_real_if_hermitian(g, psi_hat), _real_if_hermitian(g, zeta_hat), (float(V), float(h)), b)


def _rel(num: np.ndarray, den: np.ndarray) -> float:
    d = float(np.linalg.norm(den))
    n = float(np.linalg.norm(num))
    return n / d if d > 0 else n


def corrector_residual(c: CorrectorField, b: BathymetryProfile) -> float:
    """Relative L2 residual of the corrector equations (the larger of two checks).

    Checks the scalar equation ``D(d_y) psi_c = V d_y sech(h |d_y|) b`` and
    the first line ``V d_y zeta_c - |d_y| tanh(h |d_y|) psi_c = V d_y sech(h |d_y|) b``
    which uses the stored ``zeta_c``.  Both sides are evaluated spectrally.
    """
    V, h = c.params
    g = b.grid
    xi = g.xi
    a = np.abs(xi) * h
    e = np.exp(-a)
    sech = 2 * e / (1 + e * e)
    rhs = 1j * V * xi * sech * b.field.spectrum
    psi = c.psi_c.spectrum
    lhs_scalar = dispersion_denominator(xi, V, h) * psi
    lhs_first = 1j * V * xi * c.zeta_c.spectrum - np.abs(xi) * np.tanh(a) * psi
    return max(_rel(lhs_scalar - rhs, rhs), _rel(lhs_first - rhs, rhs))


def partition_of_unity(grid: Grid1D, windows: int) -> np.ndarray:
    """Smooth periodic partition ``omega_q = theta_q / sum theta``, shape ``(windows, n)``.

    ``theta_q`` is the standard bump of radius ``L / windows`` around
    ``q L / windows`` in the periodic distance, so neighbouring windows overlap.
    """
    if windows < 1:
        raise ValueError("need at least one window")
    L = grid.length
    y = grid.nodes - grid.origin
    radius = L / windows
    theta = np.empty((windows, grid.n))
    for q in range(windows):
        d = np.abs(y - q * radius) % L
        d = np.minimum(d, L - d)
        t = d / radius
        theta[q] = np.where(t < 1.0, np.exp(1.0 - 1.0 / (1.0 - np.minimum(t, 0.999999999) ** 2)), 0.0)
    return theta / theta.sum(axis=0)


def _circulant(kernel: np.ndarray) -> np.ndarray:
    n = kernel.size
    i = np.arange(n)
    return kernel[(i[:, None] - i[None, :]) % n]


def convolution_oracle(
    b: BathymetryProfile, V: float, h: float, k: SymbolK, windows: int = 2, max_n: int = 512
) -> CorrectorField:
    """Corrector by direct-space convolution, summed over a partition of unity.

    ``K0`` is sampled as the inverse DFT of its symbol; each localized piece
    ``omega_q b`` is convolved by direct quadrature and the pieces are added.
    """
    g = b.grid
    if g.n > max_n:
        raise ValueError(f"oracle grid n={g.n} exceeds the limit {max_n}")
    _check_params(k, V, h)
    khat = k.evaluator(g.xi, V, h)
    kernel = np.fft.ifft(khat).real * g.n / g.length
    dkernel = np.fft.ifft(1j * g.xi * khat).real * g.n / g.length
    C = _circulant(kernel) * g.spacing
    dC = _circulant(dkernel) * g.spacing
    omega = partition_of_unity(g, windows)
    bv = np.real(b.field.values)
    psi = np.zeros(g.n)
    zeta = np.zeros(g.n)
    for w in omega:
        piece = w * bv
        psi += V * (C @ piece)
        zeta += -V * V * (dC @ piece)
    return CorrectorField(SpectralField(g, psi), SpectralField(g, zeta), (float(V), float(h)), b)


@dataclass
class CorrectorTable:
    """Corrector evaluator over the fast variable and the slow parameters.

    Mode ``exact`` sums the closed-form per-mode multipliers; mode
    ``tabulated`` interpolates the per-mode coefficients over a tensor grid
    of ``(V, h)`` nodes with cubic splines, refined until the interpolation
    error on probe points is below ``tol``.  ``auto`` picks ``exact`` for
    discrete spectra and ``tabulated`` for bands.
    """

    profile: BathymetryProfile
    symbol: SymbolK
    mode: str = "auto"
    tol: float = 1e-6
    nodes: int = field(default=0, init=False)
    interpolation_error: float = field(default=0.0, init=False)

    def __post_init__(self) -> None:
        if self.mode == "auto":
            self.mode = "exact" if self.symbol.construction == "discrete_mollified" else "tabulated"
        if self.mode not in ("exact", "tabulated"):
            raise ValueError(f"unknown table mode {self.mode!r}")
        self.xi, self.c = self.profile.modes()
        self._interp = None
        if self.mode == "tabulated":
            self._build()

    # coefficient of exp(i xi_m (y - y0)) in psi_c
    def _coeff_exact(self, V: np.ndarray, h: np.ndarray) -> np.ndarray:
        V = np.asarray(V, dtype=float)[..., None]
        h = np.asarray(h, dtype=float)[..., None]
        return V * self.symbol.evaluator(self.xi, V, h) * self.c

    def _axes(self, n: int) -> list[np.ndarray]:
        box = self.symbol.box
        return [np.linspace(*r, n) if r[0] != r[1] else None for r in (box.V_range, box.h_range)]

    def _make(self, n: int):
        axes = self._axes(n)
        live = [a for a in axes if a is not None]
        if not live:
            const = self._coeff_exact(self.symbol.box.V_range[0], self.symbol.box.h_range[0])
            return lambda V, h: np.broadcast_to(const, np.shape(V) + const.shape)
        grids = np.meshgrid(*[a if a is not None else np.array([r[0]]) for a, r in
                              zip(axes, (self.symbol.box.V_range, self.symbol.box.h_range))], indexing="ij")
        vals = self._coeff_exact(grids[0], grids[1])
        vals = vals.reshape(tuple(len(a) for a in live) + (self.xi.size,))
        stacked = np.concatenate([vals.real, vals.imag], axis=-1)
        m = self.xi.size
        if len(live) == 1:
            spline = CubicSpline(live[0], stacked, axis=0)
            pick = 0 if axes[0] is not None else 1

            def interp(V, h):
                out = spline((V, h)[pick])
                return out[..., :m] + 1j * out[..., m:]
        else:
            rgi = RegularGridInterpolator(tuple(live), stacked, method="cubic")

            def interp(V, h):
                pts = np.stack(np.broadcast_arrays(V, h), axis=-1)
                out = rgi(pts)
                return out[..., :m] + 1j * out[..., m:]
        return interp

    def _build(self, max_doublings: int = 7) -> None:
        rng = np.random.default_rng(0)
        box = self.symbol.box
        Vp = rng.uniform(*box.V_range, 64) if box.V_range[0] != box.V_range[1] else np.full(64, box.V_range[0])
        hp = rng.uniform(*box.h_range, 64) if box.h_range[0] != box.h_range[1] else np.full(64, box.h_range[0])
        exact = self._coeff_exact(Vp, hp)
        n = 9
        for _ in range(max_doublings):
            interp = self._make(n)
            err = float(np.max(np.sum(np.abs(interp(Vp, hp) - exact), axis=-1)))
            if err < self.tol:
                self._interp, self.nodes, self.interpolation_error = interp, n, err
                return
            n = 2 * n - 1
        raise RuntimeError(f"corrector table did not reach tolerance {self.tol} (error {err:.3e})")

    def coefficients(self, V, h) -> np.ndarray:
        if self.mode == "exact":
            return self._coeff_exact(V, h)
        return self._interp(np.asarray(V, dtype=float), np.asarray(h, dtype=float))

    def evaluate(self, y: np.ndarray, V, h, dy: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """``(d_y^dy psi_c, d_y^dy zeta_c)`` at fast points ``y`` with pointwise parameters."""
        y = np.asarray(y, dtype=float)
        if self.xi.size == 0:
            return np.zeros(y.shape), np.zeros(y.shape)
        V = np.broadcast_to(np.asarray(V, dtype=float), y.shape)
        h = np.broadcast_to(np.asarray(h, dtype=float), y.shape)
        coef = self.coefficients(V, h) * (1j * self.xi) ** dy
        phase = np.exp(1j * np.outer(y - self.profile.grid.origin, self.xi)).reshape(y.shape + (self.xi.size,))
        psi = np.real(np.sum(coef * phase, axis=-1))
        zeta = np.real(np.sum(-V[..., None] * 1j * self.xi * coef * phase, axis=-1))
        return psi, zeta


def compose_slow_fast(
    table: CorrectorTable, h0: SpectralField, V0: SpectralField, gamma: float, fast_gradient: bool = False
):
    """Realize ``psi_1(x) = psi_c(x / gamma; V0(x), h0(x))`` and ``zeta_1`` likewise.

    With ``fast_gradient`` the fast derivative ``d_y zeta_c`` realized on the
    slow grid is returned as a third array.
    """
    g = h0.grid
    if V0.grid != g:
        raise ValueError("h0 and V0 live on different grids")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if table.xi.size:
        period = 2 * np.pi * gamma / np.max(np.abs(table.xi))
        if period / g.spacing < 8.0:
            raise ValueError(
                f"gamma={gamma:g} is under-resolved: {period / g.spacing:.2f} slow points per fast period (need >= 8)"
            )
    h = np.real(h0.values)
    V = np.real(V0.values)
    inside = table.symbol.box.contains(V, h)
    if not np.all(inside):
        i = int(np.flatnonzero(~inside)[0])
        raise ValueError(
            f"slow state (V={V[i]:.6g}, h={h[i]:.6g}) at x={g.nodes[i]:.6g} leaves the certified box"
        )
    y = g.nodes / gamma
    psi, zeta = table.evaluate(y, V, h)
    out = (SpectralField(g, psi), SpectralField(g, zeta))
    if fast_gradient:
        return out + (table.evaluate(y, V, h, dy=1)[1],)
    return out
