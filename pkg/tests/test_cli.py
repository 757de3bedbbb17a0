import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from shoal.cli import EXIT_RESONANCE, EXIT_VALIDATION, main, resolve_threads
from shoal.io import sha256_file
from shoal.scenario import ScenarioError, load_scenario

FLAT = """\
name: flat
bathy_kind: flat
n: 256
mu_list: [0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625]
times: [0.25, 0.5, 0.75]
T: 0.75
dt: 0.01
dtn_modes: [1, 2, 3]
dtn_h0: [1.0]
"""

BRAGG = """\
name: bragg
bathy_kind: periodic
bathy_frequencies: [3.997302692060316]
bathy_amplitudes: [0.5]
bathy_length: 6.287425087581812
box_h: [1.0, 1.0]
box_V: [0.5, 0.5]
"""


def write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.fixture(scope="module")
def flat_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("flat")
    cfg = write(root, FLAT)
    code = main(["run", "--scenario", str(cfg), "--out", str(root / "out")])
    return code, root / "out", cfg


class TestFlatRun:
    def test_exit_and_report(self, flat_run):
        code, out, _ = flat_run
        assert code == 0
        rep = json.loads((out / "residual_report.json").read_text())
        assert rep["status"] == "ok" and rep["pass_E1"] and rep["pass_E2"]
        assert rep["fitted_slope_E1"] >= 0.9
        cols = np.loadtxt(out / "residuals.dat")
        assert cols.shape == (5, 3)

    def test_manifest_lists_every_file(self, flat_run):
        _, out, cfg = flat_run
        man = json.loads((out / "manifest.json").read_text())
        assert man["failed_stage"] is None and man["version"]
        assert man["config_sha256"] == sha256_file(cfg)
        present = {p.name for p in out.iterdir()} - {"manifest.json"}
        assert present == set(man["files"])
        for name, digest in man["files"].items():
            assert sha256_file(out / name) == digest
        assert set(man["stages"]) == {"gen-bathy", "check-resonance", "solve-effective", "build-corrector",
                                      "consistency-study"}

    def test_reproducible(self, flat_run, tmp_path):
        _, out, cfg = flat_run
        assert main(["run", "--scenario", str(cfg), "--out", str(tmp_path / "again")]) == 0
        a = json.loads((out / "manifest.json").read_text())["files"]
        b = json.loads((tmp_path / "again" / "manifest.json").read_text())["files"]
        assert a == b

    def test_dtn_verify(self, flat_run, tmp_path):
        _, _, cfg = flat_run
        assert main(["dtn-verify", "--scenario", str(cfg), "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "dtn_report.json").read_text())
        assert rep["passed"] and rep["max_error"] <= 1e-3

    def test_floats_full_precision(self, flat_run):
        _, out, _ = flat_run
        line = (out / "residuals.dat").read_text().splitlines()[-1]
        assert float(line.split()[0]) == 0.00390625
        assert all(len(tok.replace("-", "").replace(".", "").split("e")[0]) >= 10 for tok in line.split()[1:])


class TestFailures:
    def test_resonant_scenario(self, tmp_path, capsys):
        cfg = write(tmp_path, BRAGG)
        code = main(["run", "--scenario", str(cfg), "--out", str(tmp_path / "o")])
        assert code == EXIT_RESONANCE
        assert "resonance check failed" in capsys.readouterr().err
        wit = json.loads((tmp_path / "o" / "resonance_witness.json").read_text())
        assert wit["witnesses"]
        man = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert man["failed_stage"] == "check-resonance"
        assert (tmp_path / "o" / "STAGE_FAILED.json").exists()
        # artifacts of the earlier stage survive
        assert (tmp_path / "o" / "bathymetry.dat").exists()

    def test_negative_alpha0(self, tmp_path, capsys):
        cfg = write(tmp_path, "name: x\nalpha0: -0.5\n", "bad.yaml")
        assert main(["run", "--scenario", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
        err = capsys.readouterr().err
        assert "alpha0" in err and "bad.yaml:2" in err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = write(tmp_path, "name: x\nalhpa0: 0.5\n")
        assert main(["gen-bathy", "--scenario", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
        assert "alhpa0" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", "--scenario", str(tmp_path / "nope.yaml")]) == EXIT_VALIDATION

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            main(["fly", "--scenario", "x"])


class TestScenario:
    @pytest.mark.parametrize("text,key", [
        ("dt: 0\n", "dt"),
        ("n: 100.5\n", "n"),
        ("bathy_kind: wavy\n", "bathy_kind"),
        ("mu_list: [0.1, -0.2]\n", "mu_list"),
        ("bathy_kind: bump_superposition\n", "seed"),
        ("grid:\n  n: 4\n", "grid"),
    ])
    def test_rejections(self, tmp_path, text, key):
        with pytest.raises(ScenarioError) as info:
            load_scenario(write(tmp_path, text))
        assert info.value.key == key

    def test_defaults_and_hash(self, tmp_path):
        p = write(tmp_path, "name: only\n")
        sc = load_scenario(p)
        assert sc.alpha0 == 0.5 and sc.margin == 0.05
        assert sc.config_sha256 == sha256_file(p)


class TestThreads:
    def test_flag_wins(self):
        assert resolve_threads(3, {"SHOAL_THREADS": "7"}) == 3

    def test_env(self):
        assert resolve_threads(None, {"SHOAL_THREADS": "5"}) == 5

    def test_default(self):
        assert resolve_threads(None, {}) == 1

    @pytest.mark.parametrize("flag,env", [(0, {}), (None, {"SHOAL_THREADS": "many"}), (None, {"SHOAL_THREADS": "-1"})])
    def test_invalid(self, flag, env):
        with pytest.raises(ValueError):
            resolve_threads(flag, env)

    def test_threads_do_not_change_reports(self, flat_run, tmp_path):
        _, out, cfg = flat_run
        assert main(["consistency-study", "--scenario", str(cfg), "--out", str(tmp_path), "--threads", "3"]) == 0
        assert (tmp_path / "residual_report.json").read_bytes() == (out / "residual_report.json").read_bytes()


def test_console_script(tmp_path):
    cfg = write(tmp_path, FLAT)
    env = dict(os.environ, SHOAL_THREADS="2")
    res = subprocess.run([sys.executable, "-m", "shoal.cli", "gen-bathy", "--scenario", str(cfg),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["threads"] == 2
