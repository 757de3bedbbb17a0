"""Command line entry point: ``shoal <subcommand> --scenario FILE``."""

from __future__ import annotations

import argparse
import datetime as _dt
import os
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .bathymetry import BathymetryProfile, EmptySupportError, gen_bathymetry, spectrum_support
from .consistency import ConsistencyScenario, convergence_study
from .corrector import CorrectorTable, solve_corrector
from .effective import Trajectory, parameter_hull, run_effective
from .io import sha256_file, write_columns, write_json
from .resonance import ParameterBox, ResonanceError, build_symbol_K, check_nonresonance
from .scenario import Scenario, ScenarioError, load_scenario
from .spectral import Grid1D, SpectralField
from .strip import StripGrid, dtn_flat, fd_strip_oracle

EXIT_VALIDATION = 2
EXIT_RESONANCE = 3
EXIT_STAGE = 4
THREADS_ENV = "SHOAL_THREADS"


class StageFailure(RuntimeError):
    def __init__(self, message: str, code: int = EXIT_STAGE):
        super().__init__(message)
        self.code = code


class Run:
    """Output directory, shared intermediate results and the manifest."""

    def __init__(self, scenario: Scenario, out: Path, threads: int, command: str):
        self.sc = scenario
        self.out = out
        self.threads = threads
        self.command = command
        self.files: list[Path] = []
        self.stages: dict[str, str] = {}
        self._profile: Optional[BathymetryProfile] = None
        self._traj: Optional[Trajectory] = None
        out.mkdir(parents=True, exist_ok=True)

    def keep(self, *paths: Path) -> None:
        for p in paths:
            if p not in self.files:
                self.files.append(p)

    # shared intermediates ------------------------------------------------
    def profile(self) -> Optional[BathymetryProfile]:
        if self.sc.is_flat:
            return None
        if self._profile is None:
            self._profile = gen_bathymetry(self.sc.bathymetry_spec())
        return self._profile

    def consistency(self) -> ConsistencyScenario:
        sc = self.sc
        return ConsistencyScenario(
            self.profile(), n=sc.n, slow_length=sc.slow_length, nz=sc.nz, amplitude=sc.init_zeta_amplitude,
            velocity_amplitude=sc.init_velocity_amplitude, width=sc.init_width, dt=sc.dt, alpha0=sc.alpha0,
            alpha_star=sc.alpha_star, margin=sc.margin, threshold=sc.threshold, kappa=sc.kappa,
        )

    def trajectory(self) -> Trajectory:
        if self._traj is None:
            cs = self.consistency()
            grid = Grid1D(self.sc.n, self.sc.slow_length, origin=-self.sc.slow_length / 2)
            self._traj = run_effective(cs.initial_state(grid), self.sc.T, self.sc.dt, alpha0=self.sc.alpha0)
        return self._traj

    def box(self) -> ParameterBox:
        sc = self.sc
        if sc.box_h is not None:
            return ParameterBox(tuple(sc.box_h), tuple(sc.box_V), sc.alpha0)
        return parameter_hull(self.trajectory(), sc.margin, sc.alpha0)

    def write_manifest(self, failed: Optional[str] = None) -> Path:
        doc = {
            "tool": "shoal",
            "version": __version__,
            "command": self.command,
            "scenario": self.sc.source,
            "config_sha256": self.sc.config_sha256,
            "seed": self.sc.seed,
            "threads": self.threads,
            "stages": self.stages,
            "failed_stage": failed,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "files": {str(p.relative_to(self.out)): sha256_file(p) for p in self.files if p.exists()},
        }
        return write_json(self.out / "manifest.json", doc)


# stages ------------------------------------------------------------------

def stage_gen_bathy(run: Run) -> None:
    prof = run.profile()
    if prof is None:
        run.keep(write_json(run.out / "bathymetry.json", {"kind": "flat"}))
        return
    run.keep(*prof.dump(run.out / "bathymetry"))


def _resonance(run: Run):
    """Return ``(report dict, symbol or None)``; raise StageFailure when resonant."""
    prof = run.profile()
    box = run.box()
    if prof is None:
        return {"passed": True, "condition": "flat bottom", "box": box.to_dict()}, None
    sc = run.sc
    try:
        support = spectrum_support(prof, sc.threshold, sc.kappa)
    except EmptySupportError:
        return {"passed": True, "condition": "empty spectrum (b = 0)", "box": box.to_dict()}, None
    mode = sc.resonance_mode
    if mode == "auto":
        mode = "cls_gap" if support.is_discrete else "froude_band"
    alpha = sc.alpha_star if mode == "cls_gap" else None
    try:
        report = check_nonresonance(support, box, mode, alpha_star=alpha)
    except ValueError as exc:
        raise StageFailure(f"resonance check failed: {exc}", EXIT_RESONANCE) from exc
    doc = report.to_dict()
    doc["box"] = box.to_dict()
    doc["support"] = support.to_dict()
    symbol = None
    if report.passed:
        try:
            symbol = build_symbol_K(support, box, alpha_star=alpha)
        except ResonanceError as exc:
            doc = exc.report.to_dict() | {"box": box.to_dict(), "support": support.to_dict(), "reason": str(exc)}
            doc["passed"] = False
    return doc, symbol


def stage_check_resonance(run: Run):
    doc, symbol = _resonance(run)
    run.keep(write_json(run.out / "resonance_report.json", doc))
    if not doc["passed"]:
        run.keep(write_json(run.out / "resonance_witness.json", {"witnesses": doc.get("witnesses", [])}))
        raise StageFailure("resonance check failed (see resonance_witness.json)", EXIT_RESONANCE)
    return symbol


def stage_solve_effective(run: Run) -> None:
    traj = run.trajectory()
    run.keep(traj.dump(run.out / "trajectory.dat", every=max(1, (len(traj.states) - 1) // 20)))
    box = parameter_hull(traj, run.sc.margin, run.sc.alpha0)
    run.keep(write_json(run.out / "effective_summary.json", {
        "steps": len(traj.states) - 1, "dt": traj.dt, "truncated": traj.truncated,
        "diagnostic": traj.diagnostic, "hull": box.to_dict(),
        "mass": [float(np.sum(np.real(s.zeta0.values)) * s.grid.spacing) for s in traj.states[:: max(1, len(traj.states) // 10)]],
    }))
    if traj.truncated:
        raise StageFailure(traj.diagnostic)


def stage_build_corrector(run: Run) -> None:
    symbol = stage_check_resonance(run)
    prof = run.profile()
    if symbol is None:
        run.keep(write_json(run.out / "corrector.json", {"note": "flat bottom: correctors vanish"}))
        return
    box = symbol.box
    V = 0.5 * (box.V_range[0] + box.V_range[1])
    h = 0.5 * (box.h_range[0] + box.h_range[1])
    c = solve_corrector(prof, V, h, symbol)
    cols, side = c.dump(run.out / "corrector")
    table = CorrectorTable(prof, symbol)
    run.keep(cols, write_json(side, {"V": V, "h": h, "table_mode": table.mode, "table_nodes": table.nodes,
                                     "interpolation_error": table.interpolation_error,
                                     "construction": symbol.construction, "box": box.to_dict()}))


def stage_dtn_verify(run: Run) -> None:
    sc = run.sc
    n = 2 * max(16, 2 ** int(np.ceil(np.log2(max(sc.dtn_modes) + 1))))
    grid = Grid1D(n, 2 * np.pi)
    rows, ok = [], True
    for h0 in sc.dtn_h0:
        for m in sc.dtn_modes:
            theta = SpectralField(grid, np.exp(1j * m * grid.nodes))
            exact = dtn_flat(theta, None, h0).values
            errs = []
            for nz in (sc.dtn_nz, 2 * sc.dtn_nz - 1):
                tr = fd_strip_oracle(theta, None, h0, StripGrid(grid, nz)).neumann_trace.values
                errs.append(float(np.max(np.abs(tr - exact)) / np.max(np.abs(exact))))
            ratio = errs[0] / errs[1]
            good = errs[0] <= 1e-3 and 3.5 <= ratio <= 4.5
            ok &= good
            rows.append((h0, m, errs[0], errs[1], ratio))
    arr = np.array(rows)
    run.keep(write_columns(run.out / "dtn_errors.dat", ["h0", "xi", "err_nz", "err_2nz", "ratio"], arr.T))
    run.keep(write_json(run.out / "dtn_report.json", {"passed": bool(ok), "nz": sc.dtn_nz,
                                                      "max_error": float(arr[:, 2].max()),
                                                      "ratio_range": [float(arr[:, 4].min()), float(arr[:, 4].max())]}))
    if not ok:
        raise StageFailure("DtN verification failed")


def stage_consistency(run: Run) -> None:
    sc = run.sc
    report = convergence_study(run.consistency(), sc.mu_list, sc.times, threads=run.threads)
    run.keep(write_json(run.out / "residual_report.json", report.to_dict()))
    if report.status != "ok":
        run.keep(write_json(run.out / "resonance_witness.json", report.details.get("resonance", {})))
        raise StageFailure("resonance check failed: consistency study not applicable", EXIT_RESONANCE)
    run.keep(write_columns(run.out / "residuals.dat", ["mu", "E1_L2", "E2_Hhalf"],
                           [report.mu_values, report.E1_L2, report.E2_Hhalf]))


PIPELINE: list[tuple[str, Callable[[Run], object]]] = [
    ("gen-bathy", stage_gen_bathy),
    ("check-resonance", stage_check_resonance),
    ("solve-effective", stage_solve_effective),
    ("build-corrector", stage_build_corrector),
    ("consistency-study", stage_consistency),
]
STAGES = dict(PIPELINE) | {"dtn-verify": stage_dtn_verify}


def resolve_threads(flag: Optional[int], env: Optional[dict] = None) -> int:
    """Flag first, then ``SHOAL_THREADS``, then 1."""
    if flag is not None:
        if flag < 1:
            raise ValueError("--threads must be at least 1")
        return flag
    raw = (os.environ if env is None else env).get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shoal", description="Shallow water over oscillating bathymetry.")
    p.add_argument("--version", action="version", version=f"shoal {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ["run", *STAGES]:
        s = sub.add_parser(name)
        s.add_argument("--scenario", required=True, type=Path, help="scenario file (flat YAML)")
        s.add_argument("--out", type=Path, default=None, help="output directory")
        s.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = resolve_threads(args.threads)
        sc = load_scenario(args.scenario)
    except (ScenarioError, ValueError) as exc:
        print(f"shoal: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = args.out or Path(sc.out_dir or Path("shoal_out") / sc.name)
    run = Run(sc, Path(out), threads, args.command)
    stages = PIPELINE if args.command == "run" else [(args.command, STAGES[args.command])]
    for name, fn in stages:
        try:
            fn(run)
        except StageFailure as exc:
            run.stages[name] = "failed"
            run.keep(write_json(run.out / "STAGE_FAILED.json", {"stage": name, "message": str(exc)}))
            run.write_manifest(failed=name)
            print(f"shoal: {name}: {exc}", file=sys.stderr)
            return exc.code
        except (ValueError, RuntimeError, ArithmeticError) as exc:
            run.stages[name] = "failed"
            run.keep(write_json(run.out / "STAGE_FAILED.json", {"stage": name, "message": str(exc)}))
            run.write_manifest(failed=name)
            print(f"shoal: {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_STAGE
        run.stages[name] = "ok"
    run.write_manifest()
    print(f"shoal: {args.command} finished; outputs in {run.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
