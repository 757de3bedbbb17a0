"""Non-resonance diagnostics and the regularised corrector symbol ``K0``.

Everything is one-dimensional: ``V`` is a scalar velocity and the dispersion
denominator is ``D(xi, V, h) = (V xi)^2 - |xi| tanh(h |xi|)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
from scipy.optimize import bisect

from .bathymetry import SpectrumSupport


@dataclass(frozen=True)
class ParameterBox:
    """Closed box of admissible slow states ``(h, V)``; ``h_min >= alpha0``."""

    h_range: tuple[float, float]
    V_range: tuple[float, float]
    alpha0: float = 0.5

    def __post_init__(self) -> None:
        hl, hh = self.h_range
        vl, vh = self.V_range
        if not self.alpha0 > 0:
            raise ValueError(f"alpha0 must be positive, got {self.alpha0}")
        if hl > hh or vl > vh:
            raise ValueError("parameter ranges must be ordered (min <= max)")
        if hl < self.alpha0:
            raise ValueError(f"h_min = {hl} is below alpha0 = {self.alpha0}")

    @classmethod
    def point(cls, V: float, h: float, alpha0: Optional[float] = None) -> "ParameterBox":
        return cls((h, h), (V, V), alpha0 if alpha0 is not None else min(0.5, h))

    @property
    def V_star(self) -> float:
        return float(max(abs(self.V_range[0]), abs(self.V_range[1])))

    def samples(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Flattened tensor grid with ``n`` points per non-degenerate dimension."""
        def axis(r):
            return np.array([r[0]]) if r[0] == r[1] else np.linspace(r[0], r[1], n)
        V, h = np.meshgrid(axis(self.V_range), axis(self.h_range), indexing="ij")
        return V.ravel(), h.ravel()

    def contains(self, V, h, tol: float = 1e-12) -> np.ndarray:
        V = np.asarray(V)
        h = np.asarray(h)
        return (
            (V >= self.V_range[0] - tol) & (V <= self.V_range[1] + tol)
            & (h >= self.h_range[0] - tol) & (h <= self.h_range[1] + tol)
        )

    def to_dict(self) -> dict:
        return {"h_range": list(self.h_range), "V_range": list(self.V_range), "alpha0": self.alpha0}


@dataclass
class ResonanceReport:
    passed: bool
    condition: str
    worst_margin: float
    witnesses: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "condition": self.condition,
            "worst_margin": self.worst_margin,
            "witnesses": [
                {"xi": w[0], "V": w[1], "h": w[2], "value": w[3]} for w in self.witnesses
            ],
            "details": self.details,
        }


class ResonanceError(ValueError):
    """Symbol construction refused; ``report`` carries the witnesses."""

    def __init__(self, message: str, report: ResonanceReport):
        super().__init__(message)
        self.report = report


def dispersion_denominator(xi, V, h):
    """``(V xi)^2 - |xi| tanh(h |xi|)``, broadcasting over its arguments."""
    xi = np.asarray(xi, dtype=float)
    if np.any(np.asarray(h) <= 0):
        raise ValueError("depth h must be positive")
    a = np.abs(xi)
    out = (np.asarray(V) * xi) ** 2 - a * np.tanh(np.asarray(h) * a)
    return out if out.ndim else float(out)


def find_bragg_roots(V: float, h: float, xi_max: float, n_scan: int = 4096, xtol: float = 1e-12) -> list[float]:
    """Positive zeros of ``D(., V, h)`` on ``(0, xi_max]`` by scan and bisection."""
    if xi_max <= 0:
        raise ValueError("xi_max must be positive")
    xs = np.linspace(0.0, xi_max, n_scan + 1)[1:]
    d = dispersion_denominator(xs, V, h)
    roots = [float(x) for x, v in zip(xs, d) if v == 0.0]
    for i in np.flatnonzero(d[:-1] * d[1:] < 0):
        roots.append(float(bisect(lambda x: dispersion_denominator(x, V, h), xs[i], xs[i + 1], xtol=xtol)))
    return sorted(roots)


def _stable(old: float, new: float, rel: float) -> bool:
    if np.isinf(old) and np.isinf(new):
        return True
    return abs(new - old) <= rel * max(abs(old), 1e-300)


def _cls_gap_margin(support: SpectrumSupport, box: ParameterBox, alpha_star: float, n: int):
    xi = support.frequencies[:, None]
    V, h = box.samples(n)
    d = dispersion_denominator(xi, V[None, :], h[None, :])
    floor = np.exp(-alpha_star * np.abs(xi))
    margin = np.abs(d) - floor
    # a sign change across the connected box forces a zero of D there
    crossing = (d.min(axis=1) < 0) & (d.max(axis=1) > 0)
    margin = np.where(crossing[:, None], np.minimum(margin, -floor), margin)
    i, j = np.unravel_index(np.argsort(margin, axis=None)[:3], margin.shape)
    witnesses = [(float(xi[a, 0]), float(V[b]), float(h[b]), float(d[a, b])) for a, b in zip(i, j)]
    return float(margin.min()), witnesses


def _froude_margin(support: SpectrumSupport, box: ParameterBox, n: int):
    vs = box.V_star
    h0 = box.h_range[0]
    rho = np.concatenate([np.linspace(abs(lo), abs(hi), n) for lo, hi in _abs_bands(support.enlarged_bands())])
    if vs * vs == 0.0:
        return float("inf"), []
    ratio = np.tanh(h0 * rho) / (vs**2 * rho)
    k = int(np.argmin(ratio))
    return float(ratio[k] - 1.0), [(float(rho[k]), vs, h0, float(ratio[k]))]


def _abs_bands(bands) -> list[tuple[float, float]]:
    out = []
    for lo, hi in bands:
        a, b = sorted((abs(lo), abs(hi)))
        if lo < 0 < hi:
            a = 0.0
        out.append((a, b))
    return out


def check_nonresonance(
    support: SpectrumSupport,
    box: ParameterBox,
    mode: Literal["cls_gap", "froude_band"],
    alpha_star: Optional[float] = None,
    n_samples: int = 17,
    rel_tol: float = 0.02,
    max_refinements: int = 6,
) -> ResonanceReport:
    """Certify a sufficient non-resonance condition on a sampled box.

    ``cls_gap`` needs a purely discrete support and ``0 < alpha_star < alpha0``;
    its margin is ``min |D| - exp(-alpha_star |xi|)`` over modes and box
    samples.  ``froude_band`` needs band support; its margin is
    ``inf tanh(h_min rho) / (V_*^2 rho) - 1`` over the enlarged bands.
    Sampling doubles until the margin is stable to ``rel_tol``.
    """
    if mode == "cls_gap":
        if not support.is_discrete:
            raise ValueError("cls_gap applies to purely discrete spectra; use froude_band for bands")
        if alpha_star is None or not 0.0 < alpha_star < box.alpha0:
            raise ValueError(f"cls_gap needs 0 < alpha_star < alpha0 = {box.alpha0}, got {alpha_star}")
        evaluate = lambda n: _cls_gap_margin(support, box, alpha_star, n)  # noqa: E731
    elif mode == "froude_band":
        if not support.bands or support.discrete_modes:
            raise ValueError("froude_band applies to pure band spectra; use cls_gap for discrete modes")
        evaluate = lambda n: _froude_margin(support, box, n)  # noqa: E731
    else:
        raise ValueError(f"unknown non-resonance mode {mode!r}")

    n = n_samples
    margin, witnesses = evaluate(n)
    history = [(n, margin)]
    converged = False
    for _ in range(max_refinements):
        n = 2 * n - 1
        new, witnesses = evaluate(n)
        history.append((n, new))
        converged = _stable(margin, new, rel_tol)
        margin = new
        if converged:
            break
    passed = bool(margin > 0 and converged)
    details = {"samples": history, "converged": converged, "alpha_star": alpha_star}
    return ResonanceReport(passed, mode, margin, witnesses, details)


def _rho_star(t: np.ndarray) -> np.ndarray:
    """Standard bump, supported on (-1, 1) with value 1 at 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 1 for t <= 0, 0 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)
        b = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
    return a / (a + b)


def discrete_cutoff(frequencies: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Sum of bumps ``rho_*((2 / r_*) (xi - xi_m))`` with ``r_* = min(1, dist to other modes)``."""
    freqs = np.sort(np.asarray(frequencies, dtype=float))
    radii = np.ones(freqs.size)
    if freqs.size > 1:
        gaps = np.diff(freqs)
        left = np.concatenate([[np.inf], gaps])
        right = np.concatenate([gaps, [np.inf]])
        radii = np.minimum(1.0, np.minimum(left, right))

    def rho(xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape)
        for f, r in zip(freqs, radii):
            out += _rho_star(2.0 * (xi - f) / r)
        return out

    return rho


def band_cutoff(bands, kappa: float) -> Callable[[np.ndarray], np.ndarray]:
    """Equal to 1 on the ``kappa``-enlarged bands, smoothly 0 beyond ``2 kappa``."""
    def rho(xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape)
        for lo, hi in bands:
            dist = np.maximum(np.maximum(lo - xi, xi - hi), 0.0)
            out = np.maximum(out, _smooth_step((dist - kappa) / kappa))
        return out

    return rho


def exact_symbol(xi, V, h):
    """``i xi sech(h |xi|) / D(xi, V, h)`` without any cutoff."""
    xi = np.asarray(xi, dtype=float)
    a = np.abs(xi) * np.asarray(h)
    e = np.exp(-a)
    sech = 2.0 * e / (1.0 + e * e)
    return 1j * xi * sech / dispersion_denominator(xi, V, h)


@dataclass(frozen=True, eq=False)
class SymbolK:
    """Regularised symbol ``K0(xi, V, h) = rho(xi) i xi sech(h |xi|) / D``.

    ``rho`` equals 1 on the discrete modes and on the ``kappa``-enlarged bands
    and vanishes outside a compact neighbourhood of the support.
    """

    cutoff: Callable[[np.ndarray], np.ndarray]
    support_descriptor: SpectrumSupport
    construction: Literal["discrete_mollified", "band_cutoff"]
    box: ParameterBox
    epsilon: float = 1.0

    def evaluator(self, xi, V, h) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        xi, V, h = np.broadcast_arrays(xi, np.asarray(V, dtype=float), np.asarray(h, dtype=float))
        rho = self.cutoff(xi)
        out = np.zeros(xi.shape, dtype=complex)
        on = rho != 0.0
        if np.any(on):
            with np.errstate(divide="ignore", invalid="ignore"):
                out[on] = rho[on] * exact_symbol(xi[on], V[on], h[on])
        return out

    __call__ = evaluator

    def support_extent(self) -> float:
        """Largest ``|xi|`` at which the cutoff can be nonzero."""
        s = self.support_descriptor
        ext = [abs(f) + 0.5 for f in s.frequencies]
        ext += [max(abs(lo), abs(hi)) + 2 * s.neighborhood_margin for lo, hi in s.bands]
        return float(max(ext))


def _vanishing_report(xi: np.ndarray, box: ParameterBox, n: int, rel: float) -> ResonanceReport:
    """Detect zeros of D for frequencies ``xi`` over the sampled box."""
    V, h = box.samples(n)
    d = dispersion_denominator(xi[:, None], V[None, :], h[None, :])
    scale = np.abs(xi)[:, None] * np.tanh(h[None, :] * np.abs(xi)[:, None]) + (V[None, :] * xi[:, None]) ** 2
    tiny = np.abs(d) <= rel * scale
    signs = np.sign(d)
    # a change of sign anywhere on the connected set (xi-interval x box) forces a zero
    crossing = bool(signs.min() < 0 < signs.max())
    score = np.abs(d) / scale
    i, j = np.unravel_index(int(np.argmin(score)), score.shape)
    witness = [(float(xi[i]), float(V[j]), float(h[j]), float(d[i, j]))]
    bad = crossing or bool(tiny.any())
    return ResonanceReport(not bad, "denominator_nonvanishing", float(score.min()) if not crossing else -float(score.min()),
                           witness, {"sign_change": crossing})


def build_symbol_K(
    support: SpectrumSupport,
    box: ParameterBox,
    alpha_star: Optional[float] = None,
    epsilon: float = 1.0,
    check: bool = True,
    n_samples: int = 17,
    vanishing_tol: float = 1e-6,
) -> SymbolK:
    """Construct the cutoff symbol for ``support`` on ``box``.

    Discrete supports get one mollifier bump per mode; band supports get a
    cutoff equal to 1 on the ``kappa``-enlarged bands and vanishing beyond
    ``2 kappa``.  With ``check`` on, construction is refused when ``D``
    vanishes (or changes sign) on the modes or on the cutoff support for
    some sampled box parameters, and when the sufficient condition of the
    matching mode fails (``cls_gap`` is checked only if ``alpha_star`` is given).
    """
    if support.discrete_modes and support.bands:
        raise ValueError("mixed discrete and band supports are not supported")
    if support.discrete_modes:
        construction = "discrete_mollified"
        cutoff = discrete_cutoff(support.frequencies)
        required = np.abs(support.frequencies)
    else:
        construction = "band_cutoff"
        kappa = support.neighborhood_margin
        cutoff = band_cutoff(support.bands, kappa)
        required = np.concatenate(
            [np.linspace(lo, hi, 257) for lo, hi in _abs_bands(support.enlarged_bands(2.0))]
        )
    k = SymbolK(cutoff, support, construction, box, epsilon)
    if not check:
        return k
    if construction == "discrete_mollified":
        # the bump around each mode must be resonance-free too
        _, radii_xi = _mode_windows(support.frequencies)
        required = radii_xi
    for n in (n_samples, 2 * n_samples - 1):
        report = _vanishing_report(required, box, n, vanishing_tol)
        if not report.passed:
            raise ResonanceError("resonance: D vanishes on the symbol support", report)
    if construction == "discrete_mollified" and alpha_star is not None:
        report = check_nonresonance(support, box, "cls_gap", alpha_star=alpha_star, n_samples=n_samples)
    elif construction == "band_cutoff":
        report = check_nonresonance(support, box, "froude_band", n_samples=n_samples)
    else:
        return k
    if not report.passed:
        raise ResonanceError(f"non-resonance condition {report.condition} failed", report)
    return k


def _mode_windows(freqs: np.ndarray, pts: int = 65) -> tuple[np.ndarray, np.ndarray]:
    freqs = np.sort(np.asarray(freqs, dtype=float))
    radii = np.ones(freqs.size)
    if freqs.size > 1:
        gaps = np.diff(freqs)
        radii = np.minimum(1.0, np.minimum(np.r_[np.inf, gaps], np.r_[gaps, np.inf]))
    xs = np.concatenate([f + 0.5 * r * np.linspace(-1, 1, pts) for f, r in zip(freqs, radii)])
    xs = xs[xs != 0.0]
    return radii, np.abs(xs)


def _fd_weights(order: int) -> np.ndarray:
    return {0: np.array([0.0, 1.0, 0.0]), 1: np.array([-0.5, 0.0, 0.5]), 2: np.array([1.0, -2.0, 1.0])}[order]


def _derivative_table(k: SymbolK, xi, V, h, step: float, m: int, n: int):
    """Nested central differences of ``(i xi)^alpha K0`` up to second order in each variable."""
    offs = (-1, 0, 1)
    vals = {}
    for a in offs:
        for b in offs:
            for c in offs:
                x = xi[:, None] + a * step
                vals[(a, b, c)] = (x, k.evaluator(x, V[None, :] + b * step, h[None, :] + c * step))
    out = {}
    for tau in range(3):
        for alpha in range(m + 1):
            for b1 in range(n + 1):
                for b2 in range(n + 1 - b1):
                    w = np.einsum("i,j,k->ijk", _fd_weights(tau), _fd_weights(b1), _fd_weights(b2))
                    acc = 0.0
                    for (a, b, c), (x, kv) in vals.items():
                        wt = w[a + 1, b + 1, c + 1]
                        if wt != 0.0:
                            acc = acc + wt * (1j * x) ** alpha * kv
                    out[(tau, alpha, b1, b2)] = acc / step ** (tau + b1 + b2)
    return out


def verify_symbol_bounds(
    k: SymbolK,
    box: Optional[ParameterBox] = None,
    m: int = 2,
    n: int = 2,
    n_xi: int = 2001,
    n_params: int = 5,
    step: float = 2e-3,
    growth_tol: float = 1.25,
) -> ResonanceReport:
    """Empirical decay constant of ``d_xi^tau d_(V,h)^beta (i xi)^alpha K0``.

    Samples ``tau <= 2``, ``alpha <= m`` and ``|beta| <= n`` on a ``xi`` grid
    and a box grid, and reports ``C = max |.| (1 + |xi|)^(1 + epsilon)``.
    The check runs twice, the second time with a doubled ``xi`` grid and a
    halved difference step; it fails on non-finite samples or when ``C``
    grows by more than ``growth_tol`` under refinement (a pole in reach).
    """
    if m > 2 or n > 2:
        raise ValueError("orders above 2 are not supported")
    box = k.box if box is None else box
    ext = k.support_extent() + 1.0
    V, h = box.samples(n_params)
    results = []
    for level in range(2):
        xs = np.linspace(-ext, ext, (n_xi - 1) * 2**level + 1)
        table = _derivative_table(k, xs, V, h, step / 2**level, m, n)
        weight = (1.0 + np.abs(xs)) ** (1.0 + k.epsilon)
        worst, witness, finite = 0.0, None, True
        for key, arr in table.items():
            a = np.abs(arr) * weight[:, None]
            if not np.all(np.isfinite(a)):
                finite = False
                i, j = np.unravel_index(int(np.argmax(~np.isfinite(a))), a.shape)
                witness = (float(xs[i]), float(V[j]), float(h[j]), float("inf"), key)
                worst = float("inf")
                break
            i, j = np.unravel_index(int(np.argmax(a)), a.shape)
            if a[i, j] > worst:
                worst = float(a[i, j])
                witness = (float(xs[i]), float(V[j]), float(h[j]), worst, key)
        results.append((worst, witness, finite))
        if not finite:
            break
    finite = all(r[2] for r in results)
    if finite:
        c0, c1 = results[0][0], results[1][0]
        stable = c1 <= growth_tol * c0 + 1e-300
    else:
        stable = False
    worst, witness, _ = results[-1]
    passed = bool(finite and stable)
    margin = 1.0 if passed else -1.0
    w = [witness[:4]] if witness else []
    details = {
        "C": worst,
        "C_coarse": results[0][0],
        "epsilon": k.epsilon,
        "worst_orders": list(witness[4]) if witness else None,
        "stable_under_refinement": stable,
    }
    return ResonanceReport(passed, "symbol_bounds", margin, w, details)
