"""Two-scale ansatz and its residuals in the full water-wave equations.

With ``gamma = sqrt(mu)`` the ansatz reads

    zeta2s = zeta0 + gamma zeta_c(x / gamma; V0, h0)
    psi2s  = psi0  + mu    psi_c(x / gamma; V0, h0)

and the residuals are

    E1 = d_t zeta2s - G psi2s / mu
    E2 = d_t psi2s + zeta2s + (d_x psi2s)^2 / 2 - mu C^2 / (2 (1 + mu (d_x zeta2s)^2))

with ``C = G psi2s / mu + d_x zeta2s d_x psi2s`` and ``G`` the Dirichlet-to-
Neumann flux of the flattened domain with bottom ``-1 + gamma b(x / gamma)``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bathymetry import BathymetryProfile, spectrum_support
from .corrector import CorrectorTable, compose_slow_fast
from .effective import EffectiveState, Trajectory, effective_rhs, parameter_hull, run_effective
from .resonance import ResonanceError, build_symbol_K
from .spectral import Grid1D, SpectralField, loglog_slope, sobolev_norm, spectral_derivative
from .strip import StripGrid, dtn_full_transformed, transformed_coefficients

# fourth-order centred first derivative on offsets -2..2
_FD4 = {-2: 1.0 / 12.0, -1: -2.0 / 3.0, 1: 2.0 / 3.0, 2: -1.0 / 12.0}
_FD2 = {-1: -0.5, 1: 0.5}


@dataclass(eq=False)
class AnsatzPair:
    zeta2s: SpectralField
    psi2s: SpectralField
    mu: float
    state: EffectiveState
    table: Optional[CorrectorTable] = None
    zeta1: Optional[np.ndarray] = None
    psi1: Optional[np.ndarray] = None
    zeta1_fast: Optional[np.ndarray] = None
    bottom: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def gamma(self) -> float:
        return float(np.sqrt(self.mu))


def _correctors(state: EffectiveState, table: Optional[CorrectorTable], mu: float):
    g = state.grid
    if table is None:
        z = np.zeros(g.n)
        return z, z, z
    psi1, zeta1, fast = compose_slow_fast(table, state.h0, state.V0, np.sqrt(mu), fast_gradient=True)
    return np.real(psi1.values), np.real(zeta1.values), fast


def assemble_ansatz(state: EffectiveState, correctors: Optional[CorrectorTable], mu: float) -> AnsatzPair:
    """Realize the two-scale ansatz at one effective state (``correctors=None`` for a flat bottom)."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    gam = np.sqrt(mu)
    psi1, zeta1, fast = _correctors(state, correctors, mu)
    g = state.grid
    bottom = np.zeros(g.n) if correctors is None else correctors.profile.realize(g.nodes, gam)
    zeta2s = SpectralField(g, np.real(state.zeta0.values) + gam * zeta1)
    psi2s = SpectralField(g, np.real(state.psi0.values) + mu * psi1)
    prov = {"time": state.time, "mu": mu, "table_mode": None if correctors is None else correctors.mode}
    return AnsatzPair(zeta2s, psi2s, float(mu), state, correctors, zeta1, psi1, fast, bottom, prov)


def _time_derivative(traj: Trajectory, t: float, table, mu: float, stencil: dict, stride: int):
    """Centred differences of the realized correctors ``(psi1, zeta1)`` across frames."""
    i = traj.index_of(t)
    dt = traj.dt * stride
    dpsi = 0.0
    dzeta = 0.0
    for off, w in stencil.items():
        j = i + off * stride
        if not 0 <= j < len(traj.states):
            raise KeyError(f"frames around t={t} are missing for time differencing")
        psi1, zeta1, _ = _correctors(traj.states[j], table, mu)
        dpsi = dpsi + w * psi1
        dzeta = dzeta + w * zeta1
    return dpsi / dt, dzeta / dt


def _residual_fields(pair: AnsatzPair, traj: Trajectory, t: float, nz: int, stride: int, order: int = 4):
    key = ("fields", t, nz, stride, order)
    if key in pair._cache:
        return pair._cache[key]
    state = pair.state
    g = state.grid
    mu, gam = pair.mu, pair.gamma
    sg = StripGrid(g, nz)
    coeffs = transformed_coefficients(
        state.zeta0, pair.bottom, pair.zeta1, mu, sg, alpha0=traj.alpha0, zeta1_fast=pair.zeta1_fast
    )
    G = np.real(dtn_full_transformed(pair.psi2s, coeffs, mu, sg).values) / mu

    dzeta0, _ = effective_rhs(state)
    z0 = np.real(state.zeta0.values)
    v0 = np.real(state.V0.values)
    dpsi0 = -z0 - 0.5 * v0**2
    if pair.table is None:
        dpsi1 = dzeta1 = np.zeros(g.n)
    else:
        dpsi1, dzeta1 = _time_derivative(traj, t, pair.table, mu, _FD4 if order == 4 else _FD2, stride)
    dt_zeta = np.real(dzeta0.values) + gam * dzeta1
    dt_psi = dpsi0 + mu * dpsi1

    zx = np.real(spectral_derivative(pair.zeta2s).values)
    px = np.real(spectral_derivative(pair.psi2s).values)
    e1 = dt_zeta - G
    c = G + zx * px
    e2 = dt_psi + np.real(pair.zeta2s.values) + 0.5 * px**2 - mu * c**2 / (2.0 * (1.0 + mu * zx**2))
    out = (SpectralField(g, e1), SpectralField(g, e2))
    pair._cache[key] = out
    return out


def residual_E1(pair: AnsatzPair, traj: Trajectory, t: float, nz: int = 128, stride: int = 1):
    """``(E1, ||E1||_L2)`` at time ``t``; ``pair`` must be assembled from the state at ``t``."""
    e1, _ = _residual_fields(pair, traj, t, nz, stride)
    return e1, e1.l2()


def residual_E2(pair: AnsatzPair, traj: Trajectory, t: float, nz: int = 128, stride: int = 1):
    """``(E2, ||E2||_H^{1/2})`` at time ``t``."""
    _, e2 = _residual_fields(pair, traj, t, nz, stride)
    return e2, sobolev_norm(e2, 0.5)


def e21_split(pair: AnsatzPair, traj: Trajectory, t: float, stride: int = 1) -> float:
    """``|| mu (d_t psi1 + V0 d_x^slow psi1 + (mu / 2) (d_x psi1)^2) ||_H^{1/2}``.

    ``d_x^slow`` differentiates through the parameters ``(V0, h0)`` only (the
    fast variable held fixed); it is the full derivative minus
    ``(1 / gamma) d_y psi_c``.  No elliptic solve is involved.
    """
    if pair.table is None:
        return 0.0
    g = pair.state.grid
    dpsi1, _ = _time_derivative(traj, t, pair.table, pair.mu, _FD4, stride)
    st = pair.state
    fast_psi, _ = pair.table.evaluate(g.nodes / pair.gamma, np.real(st.V0.values), np.real(st.h0.values), dy=1)
    p1x = np.real(spectral_derivative(SpectralField(g, pair.psi1)).values)
    slow = p1x - fast_psi / pair.gamma
    v0 = np.real(st.V0.values)
    f = pair.mu * (dpsi1 + v0 * slow + 0.5 * pair.mu * p1x**2)
    return sobolev_norm(SpectralField(g, f), 0.5)


@dataclass
class ConsistencyScenario:
    """Inputs of a residual study.

    The slow box of nominal length ``slow_length`` is snapped, for each
    ``mu``, to a multiple of ``sqrt(mu)`` times the fast period so that
    ``b(x / sqrt(mu))`` stays periodic.  Initial data: a Gaussian hump
    ``zeta0`` and a zero-mean velocity proportional to the derivative of a
    Gaussian.
    """

    profile: Optional[BathymetryProfile]
    n: int = 4096
    slow_length: float = 16.0 * np.pi
    nz: int = 128
    amplitude: float = 0.1
    velocity_amplitude: float = 0.1
    width: float = 2.0
    dt: float = 0.005
    alpha0: float = 0.5
    alpha_star: float = 0.05
    margin: float = 0.05
    threshold: float = 1e-8
    kappa: float = 0.1

    def slow_grid(self, mu: float) -> Grid1D:
        if self.profile is None:
            L = self.slow_length
        else:
            cell = np.sqrt(mu) * self.profile.grid.length
            L = cell * max(1, round(self.slow_length / cell))
        return Grid1D(self.n, L, origin=-L / 2)

    def initial_state(self, grid: Grid1D) -> EffectiveState:
        x = grid.nodes
        w = self.width
        zeta = self.amplitude * np.exp(-(x / w) ** 2)
        v = -self.velocity_amplitude * (x / w) * np.exp(0.5 - (x / w) ** 2) * np.sqrt(2.0)
        return EffectiveState(SpectralField(grid, zeta), SpectralField(grid, v), 0.0)


@dataclass
class ResidualReport:
    mu_values: list
    E1_L2: list
    E2_Hhalf: list
    fitted_slope_E1: float = float("nan")
    fitted_slope_E2: float = float("nan")
    pass_E1: bool = False
    pass_E2: bool = False
    envelope_E1: float = float("nan")
    envelope_E2: float = float("nan")
    status: str = "ok"
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "mu_values": self.mu_values,
            "E1_L2": self.E1_L2,
            "E2_Hhalf": self.E2_Hhalf,
            "fitted_slope_E1": self.fitted_slope_E1,
            "fitted_slope_E2": self.fitted_slope_E2,
            "pass_E1": self.pass_E1,
            "pass_E2": self.pass_E2,
            "envelope_E1": self.envelope_E1,
            "envelope_E2": self.envelope_E2,
            "details": self.details,
        }


def rate_verdict(mu: Sequence[float], err: Sequence[float], rate: float, tol: float = 0.1):
    """One-sided rate check: ``(slope, C, passed)``.

    ``C`` anchors the envelope ``C mu^rate`` at the largest ``mu``; the
    verdict needs a fitted slope of at least ``rate - tol`` and every point
    on or below the envelope (up to round-off).
    """
    mu = np.asarray(mu, dtype=float)
    err = np.asarray(err, dtype=float)
    if np.all(err == 0):
        return float("inf"), 0.0, True
    slope, _ = loglog_slope(mu, err)
    top = int(np.argmax(mu))
    C = float(err[top] / mu[top] ** rate)
    below = bool(np.all(err <= C * mu**rate * (1 + 1e-12)))
    return slope, C, bool(slope >= rate - tol and below)


def _study_one(scn: ConsistencyScenario, mu: float, times: Sequence[float], stride: int):
    grid = scn.slow_grid(mu)
    init = scn.initial_state(grid)
    steps = int(round(max(times) / scn.dt)) + 2 * stride + 1
    traj = run_effective(init, steps * scn.dt, scn.dt, alpha0=scn.alpha0)
    if traj.truncated:
        raise RuntimeError(traj.diagnostic)
    table = None
    if scn.profile is not None:
        box = parameter_hull(traj, scn.margin)
        support = spectrum_support(scn.profile, scn.threshold, scn.kappa)
        alpha = scn.alpha_star if support.is_discrete else None
        symbol = build_symbol_K(support, box, alpha_star=alpha)
        table = CorrectorTable(scn.profile, symbol)
    e1s, e2s, e21s = [], [], []
    for t in times:
        pair = assemble_ansatz(traj.state_at(t), table, mu)
        e1s.append(residual_E1(pair, traj, t, scn.nz, stride)[1])
        e2s.append(residual_E2(pair, traj, t, scn.nz, stride)[1])
        e21s.append(e21_split(pair, traj, t, stride))
    return {"mu": mu, "E1": max(e1s), "E2": max(e2s), "E21": max(e21s), "length": grid.length,
            "E1_by_time": e1s, "E2_by_time": e2s}


def convergence_study(
    scenario: ConsistencyScenario,
    mu_list: Sequence[float],
    times: Sequence[float],
    threads: int = 1,
    stride: int = 1,
) -> ResidualReport:
    """Max-over-times residual norms per ``mu`` and the rate verdicts.

    Returns a report with status ``not applicable`` when the resonance guard
    refuses to build the corrector symbol.
    """
    if len(mu_list) < 2:
        raise ValueError("need at least two values of mu")
    try:
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            rows = list(pool.map(lambda m: _study_one(scenario, m, times, stride), mu_list))
    except ResonanceError as exc:
        return ResidualReport(list(mu_list), [], [], status="not applicable",
                              details={"reason": str(exc), "resonance": exc.report.to_dict()})
    mus = [r["mu"] for r in rows]
    e1 = [r["E1"] for r in rows]
    e2 = [r["E2"] for r in rows]
    s1, c1, p1 = rate_verdict(mus, e1, 3.0 / 8.0)
    s2, c2, p2 = rate_verdict(mus, e2, 3.0 / 4.0)
    details = {
        "times": list(times),
        "E21_Hhalf": [r["E21"] for r in rows],
        "slow_lengths": [r["length"] for r in rows],
        "E1_by_time": [r["E1_by_time"] for r in rows],
        "E2_by_time": [r["E2_by_time"] for r in rows],
    }
    return ResidualReport(mus, e1, e2, s1, s2, p1, p2, c1, c2, "ok", details)
