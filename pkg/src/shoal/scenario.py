"""Scenario files: a flat YAML mapping validated against a fixed schema."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .bathymetry import BathymetrySpec, BumpSuperpositionSpec, PeriodicSpec, QuasiperiodicSpec


class ScenarioError(ValueError):
    """Validation failure, pointing at a file line and a field name."""

    def __init__(self, path, line: Optional[int], key: Optional[str], message: str):
        loc = f"{path}" + (f":{line}" if line else "")
        what = f" field '{key}':" if key else ""
        super().__init__(f"{loc}:{what} {message}")
        self.line = line
        self.key = key


@dataclass
class Scenario:
    """Every key a scenario file may set, with its default."""

    name: str = "scenario"
    seed: Optional[int] = None
    out_dir: Optional[str] = None
    # bathymetry on the fast variable
    bathy_kind: str = "periodic"  # periodic | quasiperiodic | bump_superposition | flat
    bathy_frequencies: list = field(default_factory=lambda: [2.0])
    bathy_amplitudes: list = field(default_factory=lambda: [0.5])
    bathy_n: int = 64
    bathy_length: float = 2.0 * np.pi
    bathy_band: list = field(default_factory=lambda: [1.0, 2.0])
    bathy_spacing: float = 1.0
    bathy_variant: str = "anderson"
    bathy_jitter: float = 0.25
    bathy_amplitude: float = 1.0
    # slow grid and initial data
    n: int = 4096
    slow_length: float = 16.0 * np.pi
    nz: int = 128
    init_zeta_amplitude: float = 0.1
    init_velocity_amplitude: float = 0.1
    init_width: float = 2.0
    dt: float = 0.005
    T: float = 1.0
    # regime and resonance
    alpha0: float = 0.5
    margin: float = 0.05
    resonance_mode: str = "auto"  # auto | cls_gap | froude_band
    alpha_star: float = 0.05
    kappa: float = 0.1
    threshold: float = 1e-8
    box_h: Optional[list] = None
    box_V: Optional[list] = None
    # studies
    mu_list: list = field(default_factory=lambda: [2.0**-j for j in range(4, 10)])
    times: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    dtn_h0: list = field(default_factory=lambda: [0.8, 1.0, 1.3])
    dtn_modes: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6, 7, 8])
    dtn_nz: int = 128
    # provenance, filled by the loader
    source: Optional[str] = field(default=None, repr=False)
    config_sha256: Optional[str] = field(default=None, repr=False)

    @property
    def is_flat(self) -> bool:
        return self.bathy_kind == "flat"

    @property
    def uses_randomness(self) -> bool:
        return self.bathy_kind == "bump_superposition" and self.bathy_variant != "lattice"

    def bathymetry_spec(self) -> Optional[BathymetrySpec]:
        if self.is_flat:
            return None
        if self.bathy_kind == "periodic":
            return PeriodicSpec(self.bathy_frequencies, self.bathy_amplitudes, self.bathy_n, self.bathy_length)
        if self.bathy_kind == "quasiperiodic":
            return QuasiperiodicSpec(self.bathy_frequencies, self.bathy_amplitudes, self.bathy_n, self.bathy_length)
        return BumpSuperpositionSpec(
            band=tuple(self.bathy_band),
            n=self.bathy_n,
            length=self.bathy_length,
            spacing=self.bathy_spacing,
            variant=self.bathy_variant,
            jitter=self.bathy_jitter,
            amplitude=self.bathy_amplitude,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        skip = {"source", "config_sha256"}
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in skip}


_FIELDS = {f.name: f for f in fields(Scenario) if f.name not in ("source", "config_sha256")}
_INT = {"seed", "bathy_n", "n", "nz", "dtn_nz"}
_FLOAT = {"bathy_length", "bathy_spacing", "bathy_jitter", "bathy_amplitude", "slow_length",
          "init_zeta_amplitude", "init_velocity_amplitude", "init_width", "dt", "T", "alpha0",
          "margin", "alpha_star", "kappa", "threshold"}
_STR = {"name", "out_dir", "bathy_kind", "bathy_variant", "resonance_mode"}
_LIST = {"bathy_frequencies", "bathy_amplitudes", "bathy_band", "box_h", "box_V", "mu_list",
         "times", "dtn_h0", "dtn_modes"}
_CHOICES = {
    "bathy_kind": ("periodic", "quasiperiodic", "bump_superposition", "flat"),
    "bathy_variant": ("lattice", "displacement", "anderson"),
    "resonance_mode": ("auto", "cls_gap", "froude_band"),
}
_POSITIVE = {"bathy_n", "n", "nz", "dtn_nz", "bathy_length", "bathy_spacing", "slow_length",
             "init_width", "dt", "T", "alpha0", "alpha_star", "kappa", "threshold"}
_NONNEG = {"margin", "bathy_jitter", "bathy_amplitude", "init_zeta_amplitude", "init_velocity_amplitude"}


def _power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _coerce(path, line, key, value):
    bad = lambda what: ScenarioError(path, line, key, f"expected {what}, got {value!r}")  # noqa: E731
    if value is None and _FIELDS[key].default is None:
        return None
    if key in _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
        return value
    if key in _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("a number")
        return float(value)
    if key in _STR:
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if key in _LIST:
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise bad("a list of numbers")
        return [float(v) for v in value] if key != "dtn_modes" else value
    raise bad("a known type")


def _validate(sc: Scenario, path, lines: dict) -> None:
    def fail(key, msg):
        raise ScenarioError(path, lines.get(key), key, msg)

    for key, choices in _CHOICES.items():
        if getattr(sc, key) not in choices:
            fail(key, f"must be one of {', '.join(choices)} (got {getattr(sc, key)!r})")
    for key in _POSITIVE:
        if not getattr(sc, key) > 0:
            fail(key, f"must be positive (got {getattr(sc, key)!r})")
    for key in _NONNEG:
        if getattr(sc, key) < 0:
            fail(key, f"must be nonnegative (got {getattr(sc, key)!r})")
    for key in ("n", "bathy_n"):
        if not _power_of_two(getattr(sc, key)):
            fail(key, f"must be a power of two (got {getattr(sc, key)})")
    for key in ("nz", "dtn_nz"):
        if getattr(sc, key) < 3:
            fail(key, "needs at least 3 vertical nodes")
    if not 0 < sc.alpha_star < sc.alpha0:
        fail("alpha_star", f"must lie in (0, alpha0 = {sc.alpha0})")
    if sc.alpha0 >= 1.0:
        fail("alpha0", "must be below the rest depth 1")
    if len(sc.bathy_frequencies) != len(sc.bathy_amplitudes):
        fail("bathy_amplitudes", "must have one entry per frequency")
    if len(sc.bathy_band) != 2 or not 0 < sc.bathy_band[0] < sc.bathy_band[1]:
        fail("bathy_band", "must be [lo, hi] with 0 < lo < hi")
    for key in ("box_h", "box_V"):
        v = getattr(sc, key)
        if v is not None and (len(v) != 2 or v[0] > v[1]):
            fail(key, "must be [min, max]")
    if (sc.box_h is None) != (sc.box_V is None):
        fail("box_h" if sc.box_h is None else "box_V", "box_h and box_V must be given together")
    if sc.box_h is not None and sc.box_h[0] < sc.alpha0:
        fail("box_h", f"minimum depth must be at least alpha0 = {sc.alpha0}")
    if len(sc.mu_list) < 2 or not all(0 < m <= 1 for m in sc.mu_list):
        fail("mu_list", "needs at least two values in (0, 1]")
    if not sc.times or any(t <= 0 or t > sc.T for t in sc.times):
        fail("times", f"sample times must lie in (0, T = {sc.T}]")
    if any(m <= 0 for m in sc.dtn_modes) or any(not isinstance(m, int) for m in sc.dtn_modes):
        fail("dtn_modes", "must be positive integers")
    if any(h <= 0 for h in sc.dtn_h0):
        fail("dtn_h0", "depths must be positive")
    if sc.uses_randomness and sc.seed is None:
        fail("seed", f"is mandatory for the random {sc.bathy_variant} family")


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; unknown keys are errors."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ScenarioError(path, None, None, f"cannot read scenario: {exc.strerror}") from exc
    text = raw.decode("utf-8")
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(path, mark.line + 1 if mark else None, None, f"not valid YAML ({exc.problem})") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict) or (node is not None and not isinstance(node, yaml.MappingNode)):
        raise ScenarioError(path, 1, None, "top level must be a key/value mapping")
    lines = {}
    if node is not None:
        for k, v in node.value:
            lines[k.value] = k.start_mark.line + 1
            if isinstance(v, yaml.MappingNode):
                raise ScenarioError(path, lines[k.value], k.value, "nested mappings are not allowed (flat keys only)")
    values: dict[str, Any] = {}
    for key, value in data.items():
        if key not in _FIELDS:
            raise ScenarioError(path, lines.get(key), str(key), "unknown key")
        values[key] = _coerce(path, lines.get(key), key, value)
    sc = Scenario(**values)
    _validate(sc, path, lines)
    sc.source = str(path)
    sc.config_sha256 = hashlib.sha256(raw).hexdigest()
    return sc
