import json
import os
from fractions import Fraction
from pathlib import Path

import pytest

from ssglab.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestConstants:
    def test_measure_simpson(self, capsys):
        code, out, _ = run_cli(capsys, "constants", "--measure", "simpson")
        body = json.loads(out)
        assert code == 0
        assert body["ell"] == 2
        assert Fraction(body["kappa_rational"]) == Fraction(-1, 2880)

    def test_measure_warns_on_interior_rule(self, capsys):
        code, out, _ = run_cli(capsys, "constants", "--measure", "midpoint")
        assert code == 0
        assert "outside" in json.loads(out)["warning"]

    def test_sigma(self, capsys):
        code, out, _ = run_cli(capsys, "constants", "sigma", "--model",
                               "fbm:H=0.16666666666666666", "--ell", "1")
        body = json.loads(out)
        assert code == 0
        assert body["sigma2"] == pytest.approx(5.391164368, rel=1e-8)
        assert body["truncation_P"] >= 4
        assert body["tail_bound"] < 1e-10 * body["sigma2"]

    def test_hermite_row(self, capsys):
        code, out, _ = run_cli(capsys, "constants", "hermite", "--r", "2")
        assert code == 0
        assert json.loads(out)["hermite_row"]["coeffs"] == [1, 10, 15]

    def test_nothing_requested(self, capsys):
        code, _, err = run_cli(capsys, "constants")
        assert code == 1
        assert "nothing requested" in err


class TestUsageErrors:
    def test_no_arguments(self, capsys):
        assert run_cli(capsys)[0] == 1

    def test_unknown_flag(self, capsys):
        assert run_cli(capsys, "constants", "--bogus")[0] == 1

    def test_bad_model_spec(self, capsys):
        code, _, err = run_cli(capsys, "oracle", "--model", "nope:a=1",
                               "--ell", "1", "--n", "16")
        assert code == 1
        assert "unknown model family" in err

    def test_bad_parameter_value(self, capsys):
        code, _, err = run_cli(capsys, "simulate", "--model", "fbm:H=0.7")
        assert code == 1
        assert "H < 1/2" in err


class TestOracle:
    def test_gap_decreases(self, capsys):
        code, out, _ = run_cli(capsys, "oracle", "--model",
                               "fbm:H=0.16666666666666666", "--ell", "1",
                               "--n", "32,64,128", "--t", "1.0")
        assert code == 0
        rows = [line.split(",") for line in out.splitlines()
                if line and not line.startswith("#") and line[0].isdigit()]
        gaps = [float(r[3]) for r in rows]
        assert gaps == sorted(gaps, reverse=True)


class TestSimulate:
    def test_deterministic_csv(self, capsys, tmp_path):
        out_file = tmp_path / "paths.csv"
        args = ("simulate", "--model", "subfbm:H=0.25", "--n", "32",
                "--paths", "3", "--seed", "7", "--out", str(out_file))
        assert run_cli(capsys, *args)[0] == 0
        first = out_file.read_bytes()
        assert run_cli(capsys, *args)[0] == 0
        assert out_file.read_bytes() == first
        lines = first.decode().splitlines()
        assert lines[2] == "path,j,t,value"
        assert lines[3].startswith("0,0,0.0,0.0")


class TestExperimentCommands:
    def base_args(self, out_dir, *extra):
        return ("variations", "--model", "fbm:H=0.16666666666666666",
                "--ell", "1", "--n", "48", "--t", "1.0", "--reps", "200",
                "--seed", "31", "--out", str(out_dir)) + extra

    def test_variations_writes_outputs(self, capsys, tmp_path):
        out = tmp_path / "run"
        code, text, _ = run_cli(capsys, *self.base_args(out))
        assert code == 0
        assert (out / "variations_report.json").exists()
        assert (out / "variations_raw.csv").exists()
        assert (out / "manifest.txt").exists()
        assert "config_hash=" in text

    def test_manifest_rerun_byte_identical(self, capsys, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli(capsys, *self.base_args(out1))[0] == 0
        manifest = out1 / "manifest.txt"
        code, _, _ = run_cli(capsys, "variations", "--config", str(manifest),
                             "--out", str(out2))
        assert code == 0
        assert (out1 / "variations_report.json").read_bytes() == \
            (out2 / "variations_report.json").read_bytes()
        assert (out1 / "variations_raw.csv").read_bytes() == \
            (out2 / "variations_raw.csv").read_bytes()

    def test_env_seed_override(self, capsys, tmp_path):
        out = tmp_path / "env"
        os.environ["SSGLAB_SEED"] = "777"
        try:
            code, text, _ = run_cli(capsys, *self.base_args(out))
        finally:
            del os.environ["SSGLAB_SEED"]
        assert code == 0
        report = json.loads((out / "variations_report.json").read_text())
        assert report["seed"] == 777

    def test_kind_mismatch_rejected(self, capsys, tmp_path):
        out = tmp_path / "m"
        assert run_cli(capsys, *self.base_args(out))[0] == 0
        code, _, err = run_cli(capsys, "ito", "--config",
                               str(out / "manifest.txt"))
        assert code == 1
        assert "kind" in err


class TestAudit:
    def test_fbm_passes(self, capsys):
        code, out, _ = run_cli(capsys, "audit", "--model", "fbm:H=0.2",
                               "--n-list", "16,32,64")
        body = json.loads(out)
        assert code == 0
        assert body["hypothesis_passed"]
        assert all(body["inequalities_passed"].values())
