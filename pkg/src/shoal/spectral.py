"""Periodic grids, FFT-based Fourier multipliers and Sobolev norms.

Everything here works on a uniform periodic box ``[origin, origin + length)``.
Spectra follow the numpy FFT ordering, so ``grid.xi[k]`` is the wavenumber
of ``np.fft.fft(values)[k]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

Symbol = Callable[[np.ndarray], np.ndarray]


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid with ``n`` nodes on a box of period ``length``."""

    n: int
    length: float
    origin: float = 0.0

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or not _is_power_of_two(int(self.n)):
            raise ValueError(f"grid size must be a power of two, got n={self.n!r}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"box length must be positive, got {self.length!r}")

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.origin + self.spacing * np.arange(self.n)
        x.setflags(write=False)
        return x

    @cached_property
    def xi(self) -> np.ndarray:
        """Wavenumbers in FFT order; the set is {2*pi*k/L : -n/2 <= k < n/2}."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)
        k.setflags(write=False)
        return k

    @property
    def wavenumbers(self) -> np.ndarray:
        """Wavenumbers sorted from -n/2 to n/2 - 1 (display order)."""
        return np.fft.fftshift(self.xi)

    @property
    def nyquist_index(self) -> int:
        return self.n // 2

    def fundamental(self) -> float:
        return 2.0 * np.pi / self.length

    def nearest_mode(self, xi: float) -> tuple[int, float]:
        """Index and wavenumber of the grid mode closest to ``xi``."""
        k = int(np.argmin(np.abs(self.xi - xi)))
        return k, float(self.xi[k])


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Samples of a function on a :class:`Grid1D` with a lazily cached DFT."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {v.shape}")
        if not np.issubdtype(v.dtype, np.complexfloating):
            v = v.astype(float)
        object.__setattr__(self, "values", _freeze(v))

    @classmethod
    def from_function(cls, grid: Grid1D, f: Callable[[np.ndarray], np.ndarray]) -> "SpectralField":
        return cls(grid, f(grid.nodes))

    @classmethod
    def from_spectrum(cls, grid: Grid1D, spectrum: np.ndarray, real: bool = True) -> "SpectralField":
        v = np.fft.ifft(spectrum)
        return cls(grid, v.real if real else v)

    @classmethod
    def zeros(cls, grid: Grid1D) -> "SpectralField":
        return cls(grid, np.zeros(grid.n))

    @cached_property
    def spectrum(self) -> np.ndarray:
        return _freeze(np.fft.fft(self.values))

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    @property
    def real(self) -> "SpectralField":
        return SpectralField(self.grid, np.real(self.values))

    def mean(self) -> float:
        return float(np.mean(self.values).real)

    def l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.spacing))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def derivative(self, order: int = 1) -> "SpectralField":
        return spectral_derivative(self, order)

    def _combine(self, other, op) -> "SpectralField":
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            other = other.values
        return SpectralField(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.values)


def _hermitian_on_grid(grid: Grid1D, m: np.ndarray) -> bool:
    """True when m(-xi) == conj(m(xi)) for every non-Nyquist mode."""
    idx = np.arange(grid.n)
    partner = (-idx) % grid.n
    keep = idx != grid.nyquist_index
    scale = max(1.0, float(np.max(np.abs(m))))
    return bool(np.all(np.abs(m[partner][keep] - np.conj(m[keep])) <= 1e-13 * scale))


def multiplier_values(grid: Grid1D, symbol: Symbol) -> np.ndarray:
    """Evaluate ``symbol`` on the grid wavenumbers and reject non-finite values."""
    m = np.asarray(symbol(grid.xi), dtype=complex)
    if m.shape == ():
        m = np.full(grid.n, m)
    bad = ~np.isfinite(m)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise ValueError(f"symbol is not finite at wavenumber xi={float(grid.xi[k])!r}")
    return m


def apply_multiplier(f: SpectralField, symbol: Symbol) -> SpectralField:
    """Return the inverse DFT of ``symbol(xi) * fft(f)``.

    Real input stays real whenever the symbol is Hermitian on the grid
    (real-even or imaginary-odd symbols, e.g. ``abs(xi) * tanh(xi)`` or
    ``1j * xi``); the Nyquist mode of an odd symbol is discarded then.
    """
    m = multiplier_values(f.grid, symbol)
    out = np.fft.ifft(m * f.spectrum)
    if f.is_real and _hermitian_on_grid(f.grid, m):
        out = out.real
    return SpectralField(f.grid, out)


def spectral_derivative(f: SpectralField, order: int = 1) -> SpectralField:
    """``d^order f / dx^order`` with the Nyquist mode zeroed for odd orders."""
    ik = 1j * f.grid.xi
    m = ik**order
    if order % 2 == 1:
        m = m.copy()
        m[f.grid.nyquist_index] = 0.0
    out = np.fft.ifft(m * f.spectrum)
    return SpectralField(f.grid, out.real if f.is_real else out)


def sobolev_norm(f: SpectralField, s: float) -> float:
    """Periodic-box ``H^s`` norm, normalised so ``s = 0`` gives the L2 norm on [0, L)."""
    g = f.grid
    w = (1.0 + g.xi**2) ** s
    return float(np.sqrt(np.sum(w * np.abs(f.spectrum) ** 2) * g.length / g.n**2))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit ``log y = slope * log x + log C``; returns ``(slope, C)``."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(np.exp(intercept))


@dataclass
class NormScaling:
    mu: list[float]
    norms: list[float]
    r: int
    slope: float = field(init=False)

    def __post_init__(self) -> None:
        self.slope = loglog_slope(self.mu, self.norms)[0]

    def as_pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.mu, self.norms))


def multiscale_norm_scaling(
    profile: Callable[[np.ndarray, np.ndarray], np.ndarray],
    mu_list: Sequence[float],
    r: int,
    grid: Grid1D,
    fast_period: float = 2.0 * np.pi,
) -> NormScaling:
    """H^r norms of the realizations ``x -> profile(x, x / sqrt(mu))``.

    ``fast_period`` is the period of ``profile`` in its second argument and
    is only used for the resolution check (at least 8 nodes per period).
    """
    norms = []
    for mu in mu_list:
        period_x = fast_period * np.sqrt(mu)
        if period_x / grid.spacing < 8.0:
            raise ValueError(
                f"mu={mu:g} is under-resolved: {period_x / grid.spacing:.2f} "
                "points per fast period (need >= 8)"
            )
        x = grid.nodes
        f = SpectralField(grid, profile(x, x / np.sqrt(mu)))
        norms.append(sobolev_norm(f, r))
    return NormScaling(list(map(float, mu_list)), norms, r)
