"""Flat-bottom shallow-water system on a periodic box (pseudo-spectral, RK4).

    d_t zeta0 + d_x (V0 (1 + zeta0)) = 0
    d_t V0 + d_x (zeta0 + V0^2 / 2) = 0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .resonance import ParameterBox
from .spectral import Grid1D, SpectralField


class CFLError(RuntimeError):
    """Time step exceeds the advective stability bound."""


class HeightFloorError(ValueError):
    """Water height dropped below ``alpha0``."""


@dataclass(frozen=True, eq=False)
class EffectiveState:
    zeta0: SpectralField
    V0: SpectralField
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.zeta0.grid != self.V0.grid:
            raise ValueError("zeta0 and V0 live on different grids")

    @property
    def grid(self) -> Grid1D:
        return self.zeta0.grid

    @property
    def h0(self) -> SpectralField:
        return 1.0 + self.zeta0

    @property
    def psi0(self) -> SpectralField:
        """Zero-mean periodic potential with ``d_x psi0 = V0``."""
        g = self.grid
        v = self.V0.spectrum
        if abs(v[0]) > 1e-12 * g.n * max(1.0, self.V0.sup()):
            raise ValueError("V0 has a nonzero mean, so its potential is not periodic")
        xi = g.xi
        spec = np.zeros(g.n, dtype=complex)
        nz = xi != 0
        spec[nz] = v[nz] / (1j * xi[nz])
        spec[g.nyquist_index] = 0.0
        return SpectralField.from_spectrum(g, spec)

    def check_height(self, alpha0: float) -> None:
        h = np.real(self.h0.values)
        i = int(np.argmin(h))
        if h[i] < alpha0:
            raise HeightFloorError(f"h0 = {h[i]:.6g} < alpha0 = {alpha0} at x = {self.grid.nodes[i]:.6g}")


def _dealias_mask(grid: Grid1D) -> np.ndarray:
    k = np.abs(np.fft.fftfreq(grid.n) * grid.n)
    return k < grid.n / 3.0


class _Rhs:
    def __init__(self, grid: Grid1D):
        self.ik = 1j * grid.xi
        self.ik[grid.nyquist_index] = 0.0
        self.mask = _dealias_mask(grid)

    def _product_dx(self, a: np.ndarray) -> np.ndarray:
        return np.fft.ifft(self.ik * self.mask * np.fft.fft(a)).real

    def __call__(self, z: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dz = -self._product_dx(v * (1.0 + z))
        dv = -self._product_dx(z + 0.5 * v * v)
        return dz, dv


def effective_rhs(s: EffectiveState) -> tuple[SpectralField, SpectralField]:
    """Tendencies ``(d_t zeta0, d_t V0)`` with 2/3-rule dealiased products."""
    rhs = _Rhs(s.grid)
    dz, dv = rhs(np.real(s.zeta0.values), np.real(s.V0.values))
    return SpectralField(s.grid, dz), SpectralField(s.grid, dv)


@dataclass
class Trajectory:
    """States at uniform spacing ``dt`` (times decrease when ``dt < 0``)."""

    states: list
    dt: float
    alpha0: float = 0.5
    truncated: bool = False
    diagnostic: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no stored state at t={t}")
        return i

    def state_at(self, t: float) -> EffectiveState:
        return self.states[self.index_of(t)]

    def dump(self, path, every: int = 1) -> Path:
        """Write every ``every``-th state as columns ``(t, x, zeta0, V0)``."""
        from .io import write_columns

        states = self.states[::every]
        g = states[0].grid
        t = np.repeat([s.time for s in states], g.n)
        x = np.tile(g.nodes, len(states))
        z = np.concatenate([np.real(s.zeta0.values) for s in states])
        v = np.concatenate([np.real(s.V0.values) for s in states])
        return write_columns(path, ["t", "x", "zeta0", "V0"], [t, x, z, v])

    @classmethod
    def load(cls, path, length: float, origin: float = 0.0, alpha0: float = 0.5) -> "Trajectory":
        """Read a checkpoint written by :meth:`dump`; any stored state can seed a restart."""
        from .io import read_columns

        cols = read_columns(path)
        times = np.unique(cols["t"])
        if cols["t"][0] > cols["t"][-1]:
            times = times[::-1]
        n = cols["t"].size // times.size
        grid = Grid1D(n, length, origin)
        states = []
        for i, t in enumerate(times):
            sl = slice(i * n, (i + 1) * n)
            states.append(EffectiveState(SpectralField(grid, cols["zeta0"][sl]), SpectralField(grid, cols["V0"][sl]), float(t)))
        dt = float(times[1] - times[0]) if times.size > 1 else 0.0
        return cls(states, dt, alpha0)


def cfl_limit(s: EffectiveState) -> float:
    h = np.real(s.h0.values)
    speed = np.max(np.abs(np.real(s.V0.values)) + np.sqrt(np.maximum(h, 0.0)))
    return 0.5 * s.grid.spacing / speed


def run_effective(
    init: EffectiveState,
    T: float,
    dt: float,
    alpha0: float = 0.5,
    save_every: int = 1,
) -> Trajectory:
    """Integrate from ``init.time`` to ``init.time + T`` with classical RK4.

    ``T`` and ``dt`` share a sign (negative for backward integration) and
    ``T / dt`` must be an integer.  A step violating the CFL bound raises
    :class:`CFLError`; a state with ``h0 < alpha0`` ends the trajectory early
    with ``truncated`` set and a diagnostic.
    """
    if dt == 0 or T * dt < 0:
        raise ValueError("dt must be nonzero and share the sign of T")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    init.check_height(alpha0)
    g = init.grid
    rhs = _Rhs(g)
    z = np.real(init.zeta0.values).copy()
    v = np.real(init.V0.values).copy()
    t0 = init.time
    states = [init]
    truncated, diag = False, ""
    for n in range(1, steps + 1):
        cur = EffectiveState(SpectralField(g, z), SpectralField(g, v), t0 + (n - 1) * dt)
        lim = cfl_limit(cur)
        if abs(dt) > lim:
            raise CFLError(f"|dt|={abs(dt):.4g} exceeds the CFL bound {lim:.4g} at t={cur.time:.6g}")
        k1 = rhs(z, v)
        k2 = rhs(z + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1])
        k3 = rhs(z + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1])
        k4 = rhs(z + dt * k3[0], v + dt * k3[1])
        z = z + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = v + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        t = t0 + n * dt
        hmin = 1.0 + z.min()
        if hmin < alpha0:
            truncated = True
            diag = f"h0 fell to {hmin:.6g} < alpha0 = {alpha0} at t = {t:.6g}; trajectory truncated"
            break
        if n % save_every == 0 or n == steps:
            states.append(EffectiveState(SpectralField(g, z), SpectralField(g, v), t))
    return Trajectory(states, dt * save_every, alpha0, truncated, diag)


def parameter_hull(traj: Trajectory, margin: float = 0.05, alpha0: Optional[float] = None) -> ParameterBox:
    """Box containing every ``(h0, V0)`` along ``traj``, enlarged by ``margin``."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    a0 = traj.alpha0 if alpha0 is None else alpha0
    h = np.concatenate([np.real(s.h0.values) for s in traj.states])
    v = np.concatenate([np.real(s.V0.values) for s in traj.states])
    h_lo = max(float(h.min()) - margin, a0)
    h_hi = max(float(h.max()) + margin, h_lo)
    return ParameterBox((h_lo, h_hi), (float(v.min()) - margin, float(v.max()) + margin), a0)
