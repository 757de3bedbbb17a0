"""Oscillating bottom profiles and the classification of their Fourier support."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np

from .spectral import Grid1D, SpectralField, spectral_derivative

Kind = Literal["periodic", "quasiperiodic", "bump_superposition"]


class EmptySupportError(ValueError):
    """No Fourier mode of the profile rises above the requested threshold."""


@dataclass(frozen=True)
class PeriodicSpec:
    """Finite cosine series ``sum_j a_j cos(xi_j y)`` with grid-resolvable ``xi_j``."""

    frequencies: Sequence[float]
    amplitudes: Sequence[float]
    n: int = 256
    length: float = 2.0 * np.pi
    kind: str = field(default="periodic", init=False)


@dataclass(frozen=True)
class QuasiperiodicSpec:
    """Cosine series with arbitrary frequencies, snapped to the box's grid modes."""

    frequencies: Sequence[float]
    amplitudes: Sequence[float]
    n: int = 1024
    length: float = 64.0 * np.pi
    kind: str = field(default="quasiperiodic", init=False)


@dataclass(frozen=True)
class BumpSuperpositionSpec:
    """``b = sum_z gamma_z b_*(y - x_z)`` with a band-limited bump ``b_*``.

    ``b_*`` has a smooth compactly supported spectrum on ``band[0] <= |xi| <= band[1]``.
    Centres sit on a lattice of the given ``spacing``; ``variant`` selects
    plain lattice (``gamma_z = 1``), ``displacement`` (``x_z = z + tau_z``,
    ``tau_z`` uniform in ``[-jitter, jitter]``) or ``anderson``
    (``gamma_z`` iid uniform on ``[0, 1]``).
    """

    band: tuple[float, float] = (1.0, 2.0)
    n: int = 1024
    length: float = 128.0
    spacing: float = 1.0
    variant: Literal["lattice", "displacement", "anderson"] = "anderson"
    jitter: float = 0.25
    amplitude: float = 1.0
    seed: Optional[int] = None
    kind: str = field(default="bump_superposition", init=False)


BathymetrySpec = Union[PeriodicSpec, QuasiperiodicSpec, BumpSuperpositionSpec]


@dataclass(frozen=True, eq=False)
class BathymetryProfile:
    field: SpectralField
    lipschitz_bound: float
    kind: str
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid1D:
        return self.field.grid

    def modes(self, rel_tol: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero Fourier modes ``(xi_k, c_k)`` with ``b(y) = sum c_k exp(i xi_k (y - y0))``."""
        spec = self.field.spectrum / self.grid.n
        mag = np.abs(spec)
        if mag.max() == 0.0:
            return np.zeros(0), np.zeros(0, dtype=complex)
        keep = mag > rel_tol * mag.max()
        return self.grid.xi[keep], spec[keep]

    def realize(self, x: np.ndarray, gamma: float, derivative: int = 0) -> np.ndarray:
        """Samples of ``d^k/dy^k b`` at ``y = x / gamma`` by trigonometric interpolation."""
        xi, c = self.modes()
        if xi.size == 0:
            return np.zeros(np.shape(x))
        y = (np.asarray(x, dtype=float) / gamma) - self.grid.origin
        out = np.zeros(y.shape)
        for k, ck in zip(xi, c):
            out += np.real(ck * (1j * k) ** derivative * np.exp(1j * k * y))
        return out

    def dump(self, stem) -> tuple[Path, Path]:
        from .io import write_columns, write_json

        stem = Path(stem)
        cols = write_columns(stem.with_suffix(".dat"), ["y", "b"], [self.grid.nodes, self.field.values])
        doc = {
            "kind": self.kind,
            "seed": self.seed,
            "n": self.grid.n,
            "length": self.grid.length,
            "lipschitz_bound": self.lipschitz_bound,
            **self.meta,
        }
        try:
            doc["support"] = spectrum_support(self).to_dict()
        except EmptySupportError:
            doc["support"] = None
        side = write_json(stem.with_suffix(".json"), doc)
        return cols, side


def _lipschitz(f: SpectralField) -> float:
    return float(np.max(np.abs(f.values)) + np.max(np.abs(spectral_derivative(f).values)))


def _finish(grid: Grid1D, values: np.ndarray, kind: str, seed=None, **meta) -> BathymetryProfile:
    values = np.asarray(values, dtype=float)
    f = SpectralField(grid, values - values.mean())
    return BathymetryProfile(f, _lipschitz(f), kind, seed, meta)


def _check_amplitudes(freqs: np.ndarray, amps: np.ndarray) -> None:
    if freqs.shape != amps.shape:
        raise ValueError("frequencies and amplitudes must have equal length")
    zero = (freqs == 0.0) & (amps != 0.0)
    if np.any(zero):
        raise ValueError("frequency 0 with nonzero amplitude: the bottom must have zero mean")


def _periodic(spec: PeriodicSpec) -> BathymetryProfile:
    grid = Grid1D(spec.n, spec.length)
    freqs = np.asarray(spec.frequencies, dtype=float)
    amps = np.asarray(spec.amplitudes, dtype=float)
    _check_amplitudes(freqs, amps)
    base = grid.fundamental()
    for f in freqs:
        m = f / base
        if abs(m - round(m)) > 1e-9 * max(1.0, abs(m)):
            raise ValueError(
                f"frequency {f:g} is not a multiple of 2*pi/L = {base:g}; use the quasiperiodic family"
            )
        if abs(round(m)) >= spec.n // 2:
            raise ValueError(f"frequency {f:g} is at or beyond the Nyquist wavenumber")
    y = grid.nodes
    b = sum(a * np.cos(f * y) for f, a in zip(freqs, amps))
    return _finish(grid, b + np.zeros(grid.n), "periodic", frequencies=freqs.tolist())


def _quasiperiodic(spec: QuasiperiodicSpec) -> BathymetryProfile:
    grid = Grid1D(spec.n, spec.length)
    freqs = np.asarray(spec.frequencies, dtype=float)
    amps = np.asarray(spec.amplitudes, dtype=float)
    _check_amplitudes(freqs, amps)
    snapped = np.array([grid.nearest_mode(abs(f))[1] * np.sign(f) for f in freqs])
    if np.any((snapped == 0.0) & (amps != 0.0)):
        raise ValueError("a frequency snaps to 0 on this box; enlarge the box")
    y = grid.nodes
    b = sum(a * np.cos(f * y) for f, a in zip(snapped, amps))
    return _finish(
        grid,
        b + np.zeros(grid.n),
        "quasiperiodic",
        frequencies=freqs.tolist(),
        snapped_frequencies=snapped.tolist(),
        snap_distance=np.abs(snapped - freqs).tolist(),
    )


def bump_spectrum(xi: np.ndarray, band: tuple[float, float]) -> np.ndarray:
    """Smooth even bump supported on ``band[0] <= |xi| <= band[1]``, peak value 1."""
    lo, hi = band
    t = (2.0 * np.abs(xi) - (lo + hi)) / (hi - lo)
    out = np.zeros(np.shape(xi))
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def _bumps(spec: BumpSuperpositionSpec) -> BathymetryProfile:
    lo, hi = spec.band
    if not 0.0 < lo < hi:
        raise ValueError(f"band must satisfy 0 < lo < hi, got {spec.band}")
    if spec.variant not in ("lattice", "displacement", "anderson"):
        raise ValueError(f"unknown bump variant {spec.variant!r}")
    if spec.variant != "lattice" and spec.seed is None:
        raise ValueError(f"the {spec.variant} variant needs an explicit seed")
    grid = Grid1D(spec.n, spec.length)
    if hi >= np.pi / grid.spacing:
        raise ValueError("band reaches the Nyquist wavenumber")
    rng = np.random.default_rng(spec.seed)
    centres = np.arange(0.0, spec.length, spec.spacing)
    weights = np.ones(centres.size)
    if spec.variant == "displacement":
        centres = centres + rng.uniform(-spec.jitter, spec.jitter, centres.size)
    elif spec.variant == "anderson":
        weights = rng.uniform(0.0, 1.0, centres.size)
    xi = grid.xi
    # periodic box: the lattice sum wraps, which is exact for box-periodic centres
    phase = np.exp(-1j * np.outer(xi, centres)) @ weights
    spectrum = spec.amplitude * bump_spectrum(xi, spec.band) * phase
    values = np.fft.ifft(spectrum * grid.n / grid.length).real
    return _finish(
        grid,
        values,
        "bump_superposition",
        seed=spec.seed,
        band=[lo, hi],
        variant=spec.variant,
        centres=int(centres.size),
    )


def gen_bathymetry(spec: BathymetrySpec) -> BathymetryProfile:
    """Build a zero-mean bottom profile from a generator description."""
    if isinstance(spec, PeriodicSpec):
        return _periodic(spec)
    if isinstance(spec, QuasiperiodicSpec):
        return _quasiperiodic(spec)
    if isinstance(spec, BumpSuperpositionSpec):
        return _bumps(spec)
    raise TypeError(f"unsupported bathymetry spec {type(spec).__name__}")


@dataclass(frozen=True)
class SpectrumSupport:
    """Discrete spikes, band components and the band neighbourhood margin ``kappa``."""

    discrete_modes: list
    bands: list
    neighborhood_margin: float = 0.1

    def __post_init__(self) -> None:
        if self.neighborhood_margin <= 0:
            raise ValueError("neighborhood margin must be positive")
        for xi, _ in self.discrete_modes:
            if xi == 0.0:
                raise ValueError("0 cannot be a discrete mode")
        for lo, hi in self.bands:
            if lo > hi or lo <= 0.0 <= hi:
                raise ValueError(f"invalid band [{lo}, {hi}]")

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([xi for xi, _ in self.discrete_modes], dtype=float)

    @property
    def is_discrete(self) -> bool:
        return bool(self.discrete_modes) and not self.bands

    def enlarged_bands(self, factor: float = 1.0) -> list[tuple[float, float]]:
        k = factor * self.neighborhood_margin
        return [(lo - k, hi + k) for lo, hi in self.bands]

    def to_dict(self) -> dict:
        return {
            "discrete_modes": [{"xi": xi, "re": a.real, "im": a.imag} for xi, a in self.discrete_modes],
            "bands": [list(b) for b in self.bands],
            "neighborhood_margin": self.neighborhood_margin,
        }


def _merge(bands: list[tuple[float, float]], margin: float) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for lo, hi in sorted(bands):
        if out and lo - margin <= out[-1][1] + margin and (lo > 0) == (out[-1][0] > 0):
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [tuple(b) for b in out]


def spectrum_support(
    profile: BathymetryProfile,
    threshold: float = 1e-8,
    margin: float = 0.1,
    gap: int = 4,
    floor: float = 1e-12,
) -> SpectrumSupport:
    """Split the above-threshold spectrum into isolated spikes and bands.

    Modes whose magnitude exceeds ``threshold`` times the peak are grouped
    into clusters separated by at least ``gap`` sub-threshold modes.  A
    one-mode cluster becomes a discrete mode (amplitude ``b_hat_k / n``, so a
    cosine of unit amplitude gives ``1/2`` per sign); longer clusters become
    bands.  Enlarged bands that would overlap are merged.  Profiles whose
    largest mode amplitude is below the absolute ``floor`` count as zero.
    """
    if threshold <= 0 or margin <= 0:
        raise ValueError("threshold and margin must be positive")
    g = profile.grid
    spec = np.fft.fftshift(profile.field.spectrum)
    xi = g.wavenumbers
    mag = np.abs(spec)
    peak = mag.max()
    if peak / g.n < floor:
        peak = 0.0
    above = np.flatnonzero((mag > threshold * peak) & (xi != 0.0)) if peak > 0 else np.zeros(0, int)
    if above.size == 0:
        raise EmptySupportError("all spectral mass lies below the threshold")
    clusters: list[list[int]] = [[int(above[0])]]
    for i in above[1:]:
        # clusters never straddle 0, which is excluded from every band
        if i - clusters[-1][-1] - 1 >= gap or (xi[i] > 0) != (xi[clusters[-1][-1]] > 0):
            clusters.append([int(i)])
        else:
            clusters[-1].append(int(i))
    discrete, bands = [], []
    for c in clusters:
        if len(c) == 1:
            discrete.append((float(xi[c[0]]), complex(spec[c[0]] / g.n)))
        else:
            bands.append((float(xi[c[0]]), float(xi[c[-1]])))
    bands = _merge(bands, margin)
    for lo, hi in bands:
        if (lo > 0 and lo - margin <= 0) or (hi < 0 and hi + margin >= 0):
            raise ValueError(f"band [{lo:g}, {hi:g}] enlarged by {margin:g} reaches 0; use a smaller margin")
    return SpectrumSupport(discrete, bands, margin)
