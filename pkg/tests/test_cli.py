"""End-to-end checks of the command-line entry points.

Everything here drives ``polygrad.cli.main`` in-process so exit codes and
stdout/stderr can be asserted directly; one test goes through a real
subprocess to confirm the module entry point works.
"""

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from polygrad.cli import main

MINI_CONFIG = """\
[problem]
kind = "quadratic"
dim = 5
l = 0.5
L = 1.0
sigma = 0.1
data_seed = 3

[schedule]
s = 20.0

[[methods]]
method = "sg"

[run]
n_trials = 2
max_k = 100
"""

# Same content as MINI_CONFIG, but with sections and keys in a different
# order and the method list written inline. Parsing must erase the
# difference before the manifest hash is taken.
MINI_CONFIG_REORDERED = """\
methods = [{method = "sg"}]

[run]
max_k = 100
n_trials = 2

[schedule]
s = 20.0

[problem]
data_seed = 3
sigma = 0.1
L = 1.0
l = 0.5
dim = 5
kind = "quadratic"
"""


def write_config(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def tree_bytes(root):
    """Map of relative path -> file bytes for every file under root."""
    root = Path(root)
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


def manifest_hash(out_dir):
    with open(Path(out_dir) / "manifest.json") as fh:
        return json.load(fh)["config_sha256"]


class TestValidate:
    def test_valid_config_exits_zero_and_reports_resolution(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINI_CONFIG)
        assert main(["validate", "--config", cfg]) == 0
        out = capsys.readouterr().out
        # sigma was omitted, so it resolves to s*L*MG1 - 1 = 20*1*1.5 - 1.
        assert "resolved sigma = 29" in out
        assert "(auto: s*L*MG1 - 1)" in out
        assert "alpha_1 bound" in out

    def test_boundary_stepsize_scale_is_rejected(self, tmp_path, capsys):
        # s = 4/l exactly; the constraint is strict, so this must fail.
        cfg = write_config(tmp_path, MINI_CONFIG.replace("s = 20.0", "s = 8.0"))
        assert main(["validate", "--config", cfg]) == 2
        out = capsys.readouterr().out
        assert "strict inequality" in out
        assert "VIOLATED" in out

    def test_missing_config_file_is_an_io_error(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.toml")
        assert main(["validate", "--config", missing]) == 3
        assert "I/O error" in capsys.readouterr().err

    def test_malformed_toml_is_a_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[problem\nkind = ")
        assert main(["validate", "--config", cfg]) == 2
        assert "cannot parse" in capsys.readouterr().err

    def test_unknown_method_is_a_config_error(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path, MINI_CONFIG.replace('method = "sg"', 'method = "bogus"')
        )
        assert main(["validate", "--config", cfg]) == 2
        assert "unknown method" in capsys.readouterr().err

    def test_unknown_config_key_is_a_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINI_CONFIG + "typo_key = 1\n")
        assert main(["validate", "--config", cfg]) == 2
        assert "unknown keys" in capsys.readouterr().err


class TestRun:
    def test_run_writes_the_full_artifact_set(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINI_CONFIG)
        out_dir = tmp_path / "out"
        assert main(["run", "--config", cfg, "--out", str(out_dir)]) == 0
        assert "artifacts written to" in capsys.readouterr().out
        for rel in (
            "traces/sg/trial_0000.csv",
            "traces/sg/trial_0001.csv",
            "aggregate_sg.csv",
            "kappa_sg.csv",
            "summary.csv",
            "report.txt",
            "manifest.json",
        ):
            assert (out_dir / rel).is_file(), rel

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, MINI_CONFIG)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", cfg, "--out", str(a)]) == 0
        assert main(["run", "--config", cfg, "--out", str(b)]) == 0
        assert tree_bytes(a) == tree_bytes(b)

    def test_thread_count_does_not_change_any_byte(self, tmp_path):
        cfg = write_config(tmp_path, MINI_CONFIG)
        a, b = tmp_path / "t1", tmp_path / "t8"
        args = ["run", "--config", cfg]
        assert main(args + ["--out", str(a), "--threads", "1"]) == 0
        assert main(args + ["--out", str(b), "--threads", "8"]) == 0
        assert tree_bytes(a) == tree_bytes(b)

    def test_manifest_hash_ignores_key_order(self, tmp_path):
        cfg1 = write_config(tmp_path, MINI_CONFIG, "a.toml")
        cfg2 = write_config(tmp_path, MINI_CONFIG_REORDERED, "b.toml")
        d1, d2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", "--config", cfg1, "--out", str(d1)]) == 0
        assert main(["run", "--config", cfg2, "--out", str(d2)]) == 0
        assert manifest_hash(d1) == manifest_hash(d2)
        assert tree_bytes(d1) == tree_bytes(d2)

    def test_manifest_hash_tracks_semantic_changes(self, tmp_path):
        cfg1 = write_config(tmp_path, MINI_CONFIG, "a.toml")
        cfg2 = write_config(
            tmp_path, MINI_CONFIG.replace("max_k = 100", "max_k = 200"), "b.toml"
        )
        d1, d2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", "--config", cfg1, "--out", str(d1)]) == 0
        assert main(["run", "--config", cfg2, "--out", str(d2)]) == 0
        assert manifest_hash(d1) != manifest_hash(d2)

    def test_run_refuses_boundary_stepsize_scale(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINI_CONFIG.replace("s = 20.0", "s = 8.0"))
        code = main(["run", "--config", cfg, "--out", str(tmp_path / "out")])
        assert code == 2
        assert "strict inequality" in capsys.readouterr().err

    def test_svrg_needs_a_finite_sum_problem(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            MINI_CONFIG.replace(
                'method = "sg"',
                'method = "svrg"\nalpha = 0.05\nsvrg_m = 40',
            ),
        )
        code = main(["run", "--config", cfg, "--out", str(tmp_path / "out")])
        assert code == 2
        assert "finite" in capsys.readouterr().err


class TestPlotdata:
    def test_missing_input_dir_is_an_io_error(self, tmp_path, capsys):
        code = main(
            ["plotdata", "--in", str(tmp_path / "absent"), "--out", str(tmp_path / "o")]
        )
        assert code == 3
        assert "does not exist" in capsys.readouterr().err

    def test_dir_without_aggregates_is_a_data_error(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["plotdata", "--in", str(empty), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "aggregate" in capsys.readouterr().err

    def test_loglog_series_match_the_aggregates(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINI_CONFIG)
        run_dir, plot_dir = tmp_path / "run", tmp_path / "plot"
        assert main(["run", "--config", cfg, "--out", str(run_dir)]) == 0
        assert main(["plotdata", "--in", str(run_dir), "--out", str(plot_dir)]) == 0
        capsys.readouterr()
        lines = (plot_dir / "loglog_sg.csv").read_text().splitlines()
        assert lines[0] == "k,ln_k,ln_mean_gap,ln_varm"
        first = lines[1].split(",")
        k = int(first[0])
        assert float(first[1]) == pytest.approx(math.log(k), rel=1e-12)
        # The smallest checkpoint is k=1 and the gap there is positive.
        assert k == 1
        assert first[2] != ""


class TestAsymptotics:
    def test_passing_grid_exits_zero_and_writes_series(self, tmp_path, capsys):
        out_dir = tmp_path / "asy"
        code = main(
            [
                "asymptotics",
                "--s", "10", "--sigma", "9", "--l", "1",
                "--kmax", "10000",
                "--out", str(out_dir),
            ]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "PASS" in stdout
        assert "FAIL" not in stdout
        lines = (out_dir / "asymptotics.csv").read_text().splitlines()
        assert lines[0] == "k,A_k,A_k_leading,B_k,B_k_leading"
        assert lines[1].startswith("1,")
        assert (out_dir / "report.txt").is_file()

    def test_short_grid_is_rejected(self, tmp_path, capsys):
        code = main(
            [
                "asymptotics",
                "--s", "10", "--sigma", "9", "--l", "1",
                "--kmax", "1000",
                "--out", str(tmp_path / "asy"),
            ]
        )
        assert code == 2
        assert "kmax" in capsys.readouterr().err

    def test_pre_asymptotic_window_exits_one(self, tmp_path, capsys):
        # A huge shift keeps the ratio B_k/B_k_leading far from converged
        # on any feasible grid, so the numeric check honestly fails.
        code = main(
            [
                "asymptotics",
                "--s", "10", "--sigma", "1e5", "--l", "1",
                "--kmax", "10000",
                "--out", str(tmp_path / "asy"),
            ]
        )
        assert code == 1
        assert "FAIL" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, MINI_CONFIG)
    proc = subprocess.run(
        [sys.executable, "-m", "polygrad.cli", "validate", "--config", cfg],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "resolved sigma = 29" in proc.stdout
