"""Elliptic problems on the flat strip ``R x (-1, 0)``.

Two families live here:

* the constant-coefficient problem ``(h0^2 d_yy + d_zz) Phi = 0`` with
  Dirichlet data ``Theta`` on top and Neumann data ``(1/h0) d_z Phi = Gamma``
  at the bottom, solved either by its closed-form Fourier multipliers
  (:func:`dtn_flat`, :func:`strip_interior`) or by a per-mode finite
  difference solve (:func:`fd_strip_oracle`);
* the variable-coefficient problem ``div_mu (P grad_mu phi) = 0`` obtained by
  flattening the fluid domain, discretised with Fourier collocation in ``x``
  and linear elements in ``z`` (:func:`dtn_full_transformed`).

Normalisations: :func:`dtn_flat`, :func:`fd_strip_oracle` and
:func:`strip_interior` return ``(1/h0) d_z Phi`` at ``z = 0``;
:func:`dtn_full_transformed` returns the unscaled flux ``e_z . P grad_mu phi``
at ``z = 0`` (divide by ``mu`` for the water-wave operator).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.sparse.linalg import LinearOperator, cg

from .spectral import Grid1D, SpectralField, loglog_slope, spectral_derivative


class ConvergenceError(RuntimeError):
    """Iterative solve stopped before reaching the requested residual."""

    def __init__(self, message: str, history: Sequence[float]):
        super().__init__(message)
        self.history = list(history)


class CoercivityError(ValueError):
    """The flattened metric degenerates (height below the admissible floor)."""


@dataclass(frozen=True)
class StripGrid:
    horizontal: Grid1D
    nz: int

    def __post_init__(self) -> None:
        if self.nz < 3:
            raise ValueError(f"need at least 3 vertical nodes, got nz={self.nz}")

    @property
    def dz(self) -> float:
        return 1.0 / (self.nz - 1)

    @cached_property
    def z(self) -> np.ndarray:
        z = np.linspace(-1.0, 0.0, self.nz)
        z.setflags(write=False)
        return z

    @cached_property
    def z_mid(self) -> np.ndarray:
        z = 0.5 * (self.z[1:] + self.z[:-1])
        z.setflags(write=False)
        return z


@dataclass(frozen=True, eq=False)
class StripSolution:
    """Potential on the strip (``phi[i, j]`` at ``x_i, z_j``) and its top flux.

    ``neumann_trace`` is ``(1/h0) d_z Phi`` for the flat problems and the
    unscaled flux ``e_z . P grad_mu phi`` for transformed solves.
    """

    phi: np.ndarray
    grid: StripGrid
    neumann_trace: SpectralField
    mu: float = 1.0
    info: dict = field(default_factory=dict)

    def dump(self, path) -> None:
        from .io import write_columns

        x, z = np.meshgrid(self.grid.horizontal.nodes, self.grid.z, indexing="ij")
        write_columns(path, ["x", "z", "phi"], [x.ravel(), z.ravel(), np.real(self.phi).ravel()])


# ---------------------------------------------------------------- flat strip

def _as_field(f: Optional[SpectralField], like: SpectralField) -> SpectralField:
    return SpectralField.zeros(like.grid) if f is None else f


def _finish(grid: Grid1D, spec: np.ndarray, real: bool) -> SpectralField:
    v = np.fft.ifft(spec)
    return SpectralField(grid, v.real if real else v)


def _sech(a: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(a))
    return 2.0 * e / (1.0 + e * e)


def dtn_flat(theta: SpectralField, gamma: Optional[SpectralField], h0: float) -> SpectralField:
    """Neumann map ``|D| tanh(h0 |D|) Theta + sech(h0 |D|) Gamma``."""
    if h0 <= 0:
        raise ValueError(f"h0 must be positive, got {h0}")
    gamma = _as_field(gamma, theta)
    k = np.abs(theta.grid.xi)
    spec = k * np.tanh(h0 * k) * theta.spectrum + _sech(h0 * k) * gamma.spectrum
    return _finish(theta.grid, spec, theta.is_real and gamma.is_real)


def strip_interior(
    theta: SpectralField, gamma: Optional[SpectralField], h0: float, z: float
) -> SpectralField:
    """Closed-form solution ``Phi(., z)`` of the flat strip problem."""
    if h0 <= 0:
        raise ValueError(f"h0 must be positive, got {h0}")
    if not -1.0 <= z <= 0.0:
        raise ValueError(f"z must lie in [-1, 0], got {z}")
    gamma = _as_field(gamma, theta)
    k = np.abs(theta.grid.xi)
    a = h0 * k
    denom = 1.0 + np.exp(-2.0 * a)
    # cosh(a(z+1))/cosh(a) and sinh(a z)/cosh(a), written without overflow
    c_ratio = np.exp(a * z) * (1.0 + np.exp(-2.0 * a * (z + 1.0))) / denom
    s_ratio = (np.exp(a * (z - 1.0)) - np.exp(-a * (z + 1.0))) / denom
    with np.errstate(invalid="ignore", divide="ignore"):
        s_over_k = np.where(k > 0, s_ratio / np.where(k > 0, k, 1.0), z * h0)
    spec = c_ratio * theta.spectrum + s_over_k * gamma.spectrum
    return _finish(theta.grid, spec, theta.is_real and gamma.is_real)


def _thomas_factor(diag: np.ndarray, off: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor symmetric tridiagonal systems stacked along axis 0."""
    n = diag.shape[1]
    w = np.empty_like(diag)
    c = np.empty_like(off)
    w[:, 0] = diag[:, 0]
    for j in range(n - 1):
        c[:, j] = off[:, j] / w[:, j]
        w[:, j + 1] = diag[:, j + 1] - off[:, j] * c[:, j]
    return w, c


def _thomas_solve(w: np.ndarray, c: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = w.shape[1]
    y = np.empty_like(rhs)
    y[:, 0] = rhs[:, 0] / w[:, 0]
    for j in range(1, n):
        y[:, j] = (rhs[:, j] - off[:, j - 1] * y[:, j - 1]) / w[:, j]
    for j in range(n - 2, -1, -1):
        y[:, j] -= c[:, j] * y[:, j + 1]
    return y


def fd_strip_oracle(
    theta: SpectralField, gamma: Optional[SpectralField], h0: float, grid: StripGrid
) -> StripSolution:
    """Second-order finite differences in ``z``, one Fourier mode at a time.

    The bottom Neumann condition uses a ghost node; the returned trace is the
    half-cell flux ``(Phi_N - Phi_{N-1})/dz + (dz/2) (h0 xi)^2 Phi_N``
    divided by ``h0``, which is second order and consistent with the stencil.
    """
    if h0 <= 0:
        raise ValueError(f"h0 must be positive, got {h0}")
    if theta.grid != grid.horizontal:
        raise ValueError("boundary data and strip grid disagree")
    gamma = _as_field(gamma, theta)
    nz, dz = grid.nz, grid.dz
    kappa2 = (h0 * grid.horizontal.xi) ** 2
    nm, nu = grid.horizontal.n, nz - 1
    # rows of -(d_zz - kappa^2), symmetrised at the ghost row by halving it
    diag = np.tile(2.0 / dz**2, (nm, nu)) + kappa2[:, None]
    diag[:, 0] *= 0.5
    off = np.full((nm, nu - 1), -1.0 / dz**2)
    rhs = np.zeros((nm, nu), dtype=complex)
    rhs[:, 0] = -h0 * gamma.spectrum / dz
    rhs[:, -1] += theta.spectrum / dz**2
    w, c = _thomas_factor(diag.astype(complex), off.astype(complex))
    if np.any(np.abs(w) == 0):
        raise np.linalg.LinAlgError("singular vertical system")
    interior = _thomas_solve(w, c, off.astype(complex), rhs)
    spec = np.concatenate([interior, theta.spectrum[:, None]], axis=1)
    trace_hat = ((spec[:, -1] - spec[:, -2]) / dz + 0.5 * dz * kappa2 * spec[:, -1]) / h0
    real = theta.is_real and gamma.is_real
    phi = np.fft.ifft(spec, axis=0)
    if real:
        phi = phi.real
    trace = _finish(grid.horizontal, trace_hat, real)
    return StripSolution(phi=phi, grid=grid, neumann_trace=trace, mu=1.0)


@dataclass
class DecayReport:
    passed: bool
    delta_fit: float
    fit_residual: float
    radii: list
    energies: list
    message: str = ""


def _periodic_distance(x: np.ndarray, x0: float, length: float) -> np.ndarray:
    d = np.abs(x - x0) % length
    return np.minimum(d, length - d)


def exp_decay_check(
    gamma: SpectralField,
    h0: float,
    grid: StripGrid,
    floor: float = 1e-6,
    support_tol: float = 1e-12,
) -> tuple[float, DecayReport]:
    """Fit the exponential decay of annular gradient energies away from a localized source.

    ``gamma`` is the bottom Neumann data (``Theta = 0``).  Energies are
    ``E_r = ||(h0 d_x Phi, d_z Phi)||_L2`` over ``r <= |x - x_c| < r + 1``
    for ``r`` beyond the source window, down to ``floor`` times the largest
    annulus.  The fit residual is ``sqrt(1 - R^2)`` of the log-linear fit.
    """
    g = grid.horizontal
    amp = np.abs(gamma.values)
    if amp.max() == 0.0:
        return float("nan"), DecayReport(True, float("nan"), 0.0, [], [], "zero source: check skipped")
    x = g.nodes
    xc = float(x[int(np.argmax(amp))])
    dist = _periodic_distance(x, xc, g.length)
    inside = amp > support_tol * amp.max()
    half_width = float(dist[inside].max())
    if 2.0 * half_width > g.length / 8 + 2 * g.spacing:
        raise ValueError(
            f"source window {2 * half_width:.3g} exceeds L/8 = {g.length / 8:.3g}"
        )
    sol = fd_strip_oracle(SpectralField.zeros(g), gamma, h0, grid)
    phi = sol.phi
    # local differences keep Gibbs ripple of a marginally resolved source out of the tail
    dphi_dx = (np.roll(phi, -1, axis=0) - np.roll(phi, 1, axis=0)) / (2.0 * g.spacing)
    dphi_dz = np.gradient(phi, grid.z, axis=1)
    density = trapezoid(h0**2 * dphi_dx**2 + dphi_dz**2, grid.z, axis=1)
    r0 = int(np.ceil(half_width))
    radii, energies = [], []
    r = r0
    while r + 1 <= g.length / 2:
        sel = (dist >= r) & (dist < r + 1)
        energies.append(float(np.sqrt(np.sum(density[sel]) * g.spacing)))
        radii.append(float(r))
        r += 1
    e = np.asarray(energies)
    keep = e > floor * e.max()
    radii_k = np.asarray(radii)[keep]
    e_k = e[keep]
    if len(e_k) < 3:
        return float("nan"), DecayReport(False, float("nan"), float("inf"), radii, energies,
                                         "fewer than 3 annuli above the round-off floor")
    if np.any(np.diff(e_k) > 0):
        return float("nan"), DecayReport(False, float("nan"), float("inf"), radii, energies,
                                         "annular energies are not monotone beyond the source")
    log_e = np.log(e_k)
    slope, intercept = np.polyfit(radii_k, log_e, 1)
    fit = slope * radii_k + intercept
    ss_res = float(np.sum((log_e - fit) ** 2))
    ss_tot = float(np.sum((log_e - log_e.mean()) ** 2))
    resid = float(np.sqrt(ss_res / ss_tot)) if ss_tot > 0 else float("inf")
    delta = float(-slope)
    ok = delta > 0 and resid < 0.1
    return delta, DecayReport(ok, delta, resid, radii, energies)


# ---------------------------------------------------------- transformed strip

def _realized(f, grid: Grid1D, gamma: float) -> np.ndarray:
    """Samples on ``grid`` of a field, a realizable profile, or zero."""
    if f is None:
        return np.zeros(grid.n)
    if isinstance(f, SpectralField):
        if f.grid != grid:
            raise ValueError("field lives on a different grid")
        return np.real(f.values)
    if hasattr(f, "realize"):
        return f.realize(grid.nodes, gamma)
    return np.asarray(f, dtype=float)


def _dx(values: np.ndarray, grid: Grid1D) -> np.ndarray:
    return spectral_derivative(SpectralField(grid, values)).values


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Metric ``P[sigma]`` of the flattened fluid domain.

    With ``g = sqrt(mu)`` and realized slow/fast samples,
    ``sigma(x, z) = (1 + z) zeta0 + g ((1 + z) zeta1 - z b)`` and
    ``P = [[h, -g sigma_x], [-g sigma_x, (1 + mu sigma_x^2) / h]]`` where
    ``h = 1 + d_z sigma``.  ``zeta1_fast`` is ``d_y zeta1`` (the fast part of
    the gradient of the corrector); when omitted the whole gradient of
    ``zeta1`` is attributed to the fast variable.
    """

    grid: StripGrid
    mu: float
    zeta0: np.ndarray
    bottom: np.ndarray
    zeta1: np.ndarray
    zeta1_fast: Optional[np.ndarray] = None

    @cached_property
    def _grads(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g = self.grid.horizontal
        return _dx(self.zeta0, g), _dx(self.bottom, g), _dx(self.zeta1, g)

    @property
    def gamma(self) -> float:
        return float(np.sqrt(self.mu))

    @cached_property
    def h(self) -> np.ndarray:
        return 1.0 + self.zeta0 + self.gamma * (self.zeta1 - self.bottom)

    @cached_property
    def h0(self) -> np.ndarray:
        return 1.0 + self.zeta0

    def sigma(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)[None, :]
        return (1 + z) * self.zeta0[:, None] + self.gamma * (
            (1 + z) * self.zeta1[:, None] - z * self.bottom[:, None]
        )

    def sigma_x(self, z: np.ndarray) -> np.ndarray:
        dz0, db, dz1 = self._grads
        z = np.asarray(z)[None, :]
        return (1 + z) * dz0[:, None] + self.gamma * ((1 + z) * dz1[:, None] - z * db[:, None])

    def entries(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(P_xx, P_xz, P_zz)`` at heights ``z`` (arrays of shape ``(nx, len(z))``)."""
        sx = self.sigma_x(z)
        h = self.h[:, None]
        p11 = np.broadcast_to(h, sx.shape)
        p12 = -self.gamma * sx
        p22 = (1.0 + self.mu * sx**2) / h
        return p11, p12, p22

    @property
    def p11(self) -> np.ndarray:
        return self.entries(self.grid.z)[0]

    @property
    def p12(self) -> np.ndarray:
        return self.entries(self.grid.z)[1]

    @property
    def p22(self) -> np.ndarray:
        return self.entries(self.grid.z)[2]

    def split(self, z: Optional[np.ndarray] = None) -> dict:
        """Pieces ``P00, P01, P10, P11`` with ``P = P00 + g (P01 + P10) + mu P11``."""
        z = self.grid.z if z is None else np.asarray(z)
        g, mu = self.gamma, self.mu
        dz0, db, dz1 = self._grads
        zz = z[None, :]
        h0 = self.h0[:, None]
        b = self.bottom[:, None]
        z1 = self.zeta1[:, None]
        # fast gradients of b(x/g) and zeta1; the slow remainder goes to P11
        db_fast = g * db[:, None]
        dz1_fast = (g * dz1 if self.zeta1_fast is None else self.zeta1_fast)[:, None]
        dsig1_fast = (1 + zz) * dz1_fast - zz * db_fast
        dsig1_full = (1 + zz) * dz1[:, None] - zz * db[:, None]
        dsig1_slow = dsig1_full - dsig1_fast / g
        shape = np.broadcast_shapes(h0.shape, zz.shape)
        zero = np.zeros(shape)

        p00 = (np.broadcast_to(h0, shape), zero, np.broadcast_to(1.0 / h0, shape))
        dsig0 = (1 + zz) * dz0[:, None]
        p01 = (zero, -dsig0 + zero, g * dsig0**2 / h0 + zero)
        h1 = z1 - b
        p10 = (np.broadcast_to(h1, shape), -dsig1_fast + zero, np.broadcast_to((b - z1) / h0**2, shape))
        full = self.entries(z)
        p0_corner = (1.0 + mu * dsig0**2) / h0
        p1122 = ((full[2] - p0_corner) / g - (b - z1) / h0**2) / g
        p11 = (zero, -dsig1_slow + zero, p1122)
        return {"P00": p00, "P01": p01, "P10": p10, "P11": p11}

    def min_eigenvalue(self) -> float:
        p11, p12, p22 = self.entries(self.grid.z)
        tr = p11 + p22
        det = p11 * p22 - p12**2
        return float(np.min(0.5 * (tr - np.sqrt(np.maximum(tr**2 - 4 * det, 0.0)))))


def transformed_coefficients(
    zeta: SpectralField,
    b,
    zeta1,
    mu: float,
    grid: StripGrid,
    alpha0: float = 0.5,
    zeta1_fast: Optional[np.ndarray] = None,
) -> CoefficientField:
    """Assemble the metric of the flattened domain over ``grid``.

    ``b`` is either the realized bottom samples ``b(x / sqrt(mu))`` on the
    slow grid (a :class:`SpectralField` or array), a bathymetry profile with a
    ``realize`` method, or ``None`` for a flat bottom.  ``zeta1`` likewise.
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    g = grid.horizontal
    if zeta.grid != g:
        raise ValueError("surface elevation and strip grid disagree")
    gam = float(np.sqrt(mu))
    c = CoefficientField(
        grid=grid,
        mu=float(mu),
        zeta0=np.real(zeta.values).astype(float),
        bottom=_realized(b, g, gam),
        zeta1=_realized(zeta1, g, gam),
        zeta1_fast=None if zeta1_fast is None else np.asarray(zeta1_fast, dtype=float),
    )
    bad = np.flatnonzero(c.h < alpha0 / 2)
    if bad.size:
        i = int(bad[0])
        raise CoercivityError(
            f"height {c.h[i]:.6g} < alpha0/2 = {alpha0 / 2:g} at node {i} (x = {g.nodes[i]:.6g})"
        )
    return c


class _TransformedOperator:
    """Stiffness operator of ``int grad_mu v . P grad_mu phi`` on the strip.

    Fourier collocation in ``x``; linear elements in ``z`` with every element
    integral evaluated at the element midpoint.
    """

    def __init__(self, coeffs: CoefficientField):
        self.c = coeffs
        sg = coeffs.grid
        self.nx, self.nz, self.dz = sg.horizontal.n, sg.nz, sg.dz
        self.smu = np.sqrt(coeffs.mu)
        self.p11, self.p12, self.p22 = (np.ascontiguousarray(a) for a in coeffs.entries(sg.z_mid))
        xi = 2.0 * np.pi * np.fft.rfftfreq(self.nx, d=sg.horizontal.spacing)
        xi[-1] = 0.0  # Nyquist derivative dropped (keeps D skew-symmetric)
        self.ik = (1j * xi)[:, None]
        self.xi = xi

    def _dx(self, a: np.ndarray) -> np.ndarray:
        return np.fft.irfft(self.ik * np.fft.rfft(a, axis=0), n=self.nx, axis=0)

    def fluxes(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        um = 0.5 * (u[:, 1:] + u[:, :-1])
        gx = self.smu * self._dx(um)
        gz = (u[:, 1:] - u[:, :-1]) / self.dz
        return self.p11 * gx + self.p12 * gz, self.p12 * gx + self.p22 * gz

    def apply(self, u: np.ndarray) -> np.ndarray:
        fx, fz = self.fluxes(u)
        t = -0.5 * self.dz * self.smu * self._dx(fx)
        r = np.zeros_like(u)
        r[:, :-1] += t - fz
        r[:, 1:] += t + fz
        return r

    def preconditioner(self):
        """Exact inverse of the operator with x-averaged diagonal coefficients."""
        a = float(np.mean(self.p11))
        d = float(np.mean(self.p22))
        nu, dz = self.nz - 1, self.dz
        q = self.c.mu * self.xi**2 * a
        nm = q.size
        diag = np.zeros((nm, nu))
        off = np.zeros((nm, nu - 1))
        for e in range(self.nz - 1):
            m = dz * (0.25 * q)
            s = d / dz
            for i, j in ((e, e), (e + 1, e + 1)):
                if i < nu:
                    diag[:, i] += m + s
            if e + 1 < nu:
                off[:, e] += m - s
        w, c = _thomas_factor(diag, off)

        def solve(r: np.ndarray) -> np.ndarray:
            rh = np.fft.rfft(r, axis=0)
            yr = _thomas_solve(w, c, off, rh.real)
            yi = _thomas_solve(w, c, off, rh.imag)
            return np.fft.irfft(yr + 1j * yi, n=self.nx, axis=0)

        return solve


def _solve_transformed(
    psi: np.ndarray, coeffs: CoefficientField, rtol: float, maxiter: int
) -> tuple[np.ndarray, np.ndarray, dict]:
    op = _TransformedOperator(coeffs)
    nx, nz = op.nx, op.nz
    shape = (nx, nz - 1)
    lift = np.zeros((nx, nz))
    lift[:, -1] = psi
    rhs = -op.apply(lift)[:, :-1]

    def matvec(v):
        u = np.zeros((nx, nz))
        u[:, :-1] = v.reshape(shape)
        return op.apply(u)[:, :-1].ravel()

    prec = op.preconditioner()
    A = LinearOperator((nx * (nz - 1),) * 2, matvec=matvec, dtype=float)
    M = LinearOperator(A.shape, matvec=lambda v: prec(v.reshape(shape)).ravel(), dtype=float)
    bnorm = float(np.linalg.norm(rhs))
    history: list[float] = []

    def record(xk):
        history.append(float(np.linalg.norm(rhs.ravel() - matvec(xk)) / max(bnorm, 1e-300)))

    if bnorm == 0.0:
        sol = np.zeros(shape)
        status = 0
    else:
        x, status = cg(A, rhs.ravel(), rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=record)
        sol = x.reshape(shape)
    u = lift.copy()
    u[:, :-1] = sol
    final = float(np.linalg.norm(op.apply(u)[:, :-1]) / max(bnorm, 1e-300)) if bnorm else 0.0
    if status != 0 or final > 10 * rtol:
        raise ConvergenceError(
            f"transformed elliptic solve did not converge (status {status}, relative residual {final:.3e})",
            history,
        )
    flux = op.apply(u)[:, -1]
    return u, flux, {"iterations": len(history), "residual": final, "history": history}


def dtn_full_transformed(
    psi: SpectralField,
    coeffs: CoefficientField,
    mu: float,
    grid: StripGrid,
    rtol: float = 1e-10,
    maxiter: int = 500,
    return_solution: bool = False,
):
    """Flux ``e_z . P grad_mu phi`` at ``z = 0`` for ``phi = psi`` on the surface.

    Solves ``div_mu(P grad_mu phi) = 0`` with zero conormal flux at ``z = -1``
    by preconditioned conjugate gradients (the preconditioner is the exact
    per-mode inverse of the x-averaged diagonal metric).  The returned flux
    is the variational one, i.e. the residual of the discrete equation at the
    surface nodes.  Divide by ``mu`` to obtain the water-wave operator.
    """
    if grid != coeffs.grid or not np.isclose(mu, coeffs.mu):
        raise ValueError("coefficients were assembled for a different grid or mu")
    if psi.grid != grid.horizontal:
        raise ValueError("surface potential and strip grid disagree")
    # constants carry no flux; removing the mean makes the result gauge-free
    data = np.real(psi.values)
    mean = float(np.mean(data))
    u, flux, info = _solve_transformed(data - mean, coeffs, rtol, maxiter)
    g = SpectralField(grid.horizontal, flux)
    if return_solution:
        u = u + mean
        return g, StripSolution(phi=u, grid=grid, neumann_trace=g, mu=mu, info=info)
    return g


def _gradient_norm(e: np.ndarray, grid: StripGrid, mu: float) -> float:
    """``||grad_mu e||_{L2(strip)}`` with the same midpoint quadrature as the solver."""
    g = grid.horizontal
    em = 0.5 * (e[:, 1:] + e[:, :-1])
    gx = np.sqrt(mu) * np.fft.ifft(1j * g.xi[:, None] * np.fft.fft(em, axis=0), axis=0).real
    gz = np.diff(e, axis=1) / grid.dz
    return float(np.sqrt(np.sum(gx**2 + gz**2) * g.spacing * grid.dz))


@dataclass
class ShallowExpansion:
    mu: list
    err1: list
    err2: list

    @property
    def slope1(self) -> float:
        return loglog_slope(self.mu, self.err1)[0]

    @property
    def slope2(self) -> float:
        return loglog_slope(self.mu, self.err2)[0]

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.mu, self.err1, self.err2))


def shallow_expansion_error(
    psi0: SpectralField,
    zeta0: SpectralField,
    mu_list: Sequence[float],
    nz: int = 128,
    alpha0: float = 0.5,
    rtol: float = 1e-12,
) -> ShallowExpansion:
    """Distance between the flat-bottom potential and its shallow-water expansion.

    For each ``mu`` the flattened problem with ``b = 0`` is solved and
    ``err1 = ||grad_mu(phi0 - psi0)||``, ``err2 = ||grad_mu(phi0 - psi0 - mu phi01)||``
    are returned, where ``phi01 = -(z^2/2 + z) h0^2 psi0''``.
    """
    g = psi0.grid
    sg = StripGrid(g, nz)
    h0 = 1.0 + np.real(zeta0.values)
    lap = np.real(spectral_derivative(psi0, 2).values)
    z = sg.z[None, :]
    phi01 = -(0.5 * z**2 + z) * (h0**2 * lap)[:, None]
    base = np.real(psi0.values)[:, None]
    out = ShallowExpansion([], [], [])
    for mu in mu_list:
        coeffs = transformed_coefficients(zeta0, None, None, mu, sg, alpha0=alpha0)
        if not np.any(psi0.values):
            e1 = e2 = 0.0
        else:
            u, _, _ = _solve_transformed(np.real(psi0.values), coeffs, rtol, 1000)
            e1 = _gradient_norm(u - base, sg, mu)
            e2 = _gradient_norm(u - base - mu * phi01, sg, mu)
        out.mu.append(float(mu))
        out.err1.append(e1)
        out.err2.append(e2)
    return out
