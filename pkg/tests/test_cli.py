import json
import subprocess
import sys

import pytest

from graphonmf.cli import cutnorm_rows, main
from graphonmf.graphon import Constant, StochasticBlock


def test_validate_constant(tmp_path, capsys):
    assert main(["validate", "--scenario", "constant_linear", "--out", str(tmp_path)]) == 0
    v = json.loads((tmp_path / "validate.json").read_text())
    assert all(v["verdicts"].values())
    assert v["lipschitz_probe"]["within"]
    assert (tmp_path / "manifest.json").exists() and (tmp_path / "scenario.toml").exists()
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "validate" and man["seed"] == man["scenario"]["simulation"]["seed"]
    assert "validate constant_linear" in capsys.readouterr().out


def test_poc_gating_exit_code(tmp_path):
    assert main(["poc", "--scenario", "powerlaw_lln", "--out", str(tmp_path)]) == 2


def test_usage_and_unknown(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    assert main(["lln", "--scenario", "no_such_scenario", "--out", str(tmp_path)]) == 1


def test_lln_byte_identical(tmp_path, monkeypatch):
    args = ["lln", "--scenario", "zero_null", "--seed", "3", "--no-secondary"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("GRAPHONMF_THREADS", "2")
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("lln.csv", "scenario.toml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    # timings are the only field allowed to differ
    ja, jb = (json.loads((tmp_path / d / "lln.json").read_text()) for d in "ab")
    ja.pop("wallclock_seconds"), jb.pop("wallclock_seconds")
    assert ja == jb


def test_threads_env_invalid(tmp_path, monkeypatch):
    monkeypatch.setenv("GRAPHONMF_THREADS", "many")
    assert main(["validate", "--scenario", "zero_null", "--out", str(tmp_path)]) == 1


def test_simulate_and_limit(tmp_path):
    assert main(["simulate", "--scenario", "zero_null", "--n", "8",
                 "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "trajectories.csv").exists()
    assert main(["limit", "--scenario", "zero_null", "--out", str(tmp_path / "l")]) == 0
    man = json.loads((tmp_path / "l" / "flow" / "manifest.json").read_text())
    assert "assumptions" in man


def test_cutnorm_rows():
    rows = cutnorm_rows(Constant(0.3), [2, 4])
    assert all(r[1] == pytest.approx(0.0, abs=1e-15) and r[3] for r in rows)
    sbm = StochasticBlock([0.0, 0.3, 1.0], [[1.0, 0.0], [0.0, 1.0]])
    rows = cutnorm_rows(sbm, [2, 5, 10])
    assert all(lo <= up + 1e-15 for _, lo, up, _, _ in rows)
    # ||D||_cut <= ||D||_{inf->1} <= 4 ||D||_cut on the exact rows
    assert all(lo <= i1 + 1e-12 <= 4 * lo + 2e-12 for _, lo, _, ex, i1 in rows if ex)
    assert rows[0][1] > 0


def test_cutnorm_cli(tmp_path):
    assert main(["cutnorm", "--scenario", "sbm_two_block", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "cutnorm.csv").read_text().splitlines()
    assert lines[0] == "N,lower,upper,exact,inf_to_one" and len(lines) > 1


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "graphonmf", "validate", "--scenario", "zero_null",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
