import json

import numpy as np
import pytest

from logibranch.cli import ConfigError, RunConfig, main, read_config_file

HALF = "interval:0,1.5707963267948966"
TWO_PI = "interval:0,6.283185307179586"


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _table(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    cols = lines[0].split(",")
    return cols, [l.split(",") for l in lines[1:]]


def test_eig_output(capsys):
    code, out, _ = _run(capsys, "eig", "--domain", HALF, "--n", "256")
    assert code == 0
    assert out.startswith("# logibranch 0.1.0 config_hash=")
    assert "lambda_omega" in out


def test_sigma1_precondition_exit(capsys):
    code, _, err = _run(capsys, "eig", "--domain", TWO_PI, "--n", "256", "--require-sigma1")
    assert code == 4 and "precondition" in err


def test_config_errors(capsys, tmp_path):
    assert _run(capsys, "solve", "--q", "1.5")[0] == 2
    assert _run(capsys, "asympt", "--lambdas", "0.1,0.01")[0] == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert _run(capsys, "solve", "--config", str(bad))[0] == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nlambda = 0.05\nlambdas = 0.1, 1, 10\nn = 64\ndomain = interval:0,2\n")
    vals = read_config_file(str(cfg))
    assert vals == {"lam": 0.05, "lambdas": (0.1, 1.0, 10.0), "n": 64, "domain": "interval:0,2"}
    rc = RunConfig(**vals)
    assert rc.config_hash != RunConfig(**{**vals, "lam": 0.06}).config_hash
    assert rc.problem_hash == RunConfig(**{**vals, "lam": 0.06}).problem_hash
    with pytest.raises(ConfigError):
        RunConfig(eps_schedule=(1e-4, 1e-3))


def test_solve_is_byte_identical(capsys):
    argv = ("solve", "--domain", HALF, "--n", "128", "--lambda", "0.02")
    code1, out1, _ = _run(capsys, *argv)
    code2, out2, _ = _run(capsys, *argv)
    assert code1 == code2 == 0 and out1 == out2
    cols, rows = _table(out1)
    assert cols == ["x", "u"]
    u = np.array([float(r[1]) for r in rows])
    assert 0 < u.min() and u.max() < 1
    # full double precision in every cell
    assert all(float(r[1]) == float(f"{float(r[1]):.17g}") for r in rows)


def test_nehari_route_and_fibering(capsys, tmp_path):
    path = tmp_path / "u.csv"
    code, _, _ = _run(capsys, "solve", "--domain", HALF, "--n", "128", "--lambda", "0.02",
                      "--route", "nehari-", "--output", str(path))
    assert code == 0
    code, out, _ = _run(capsys, "fibering", "--domain", HALF, "--n", "128", "--lambda", "0.02",
                        "--field", str(path))
    assert code == 0
    doc = json.loads(out)
    fib = doc["fibering"]
    assert "header" in doc and len(fib["roots"]) == 2
    # u- is a local maximum of its fiber, so t = 1 is the smaller root
    assert fib["roots"][0] == pytest.approx(1.0, abs=1e-8)
    assert fib["classification"] == "NehariMinus"


def test_continue_and_diagram(capsys, tmp_path):
    a = tmp_path / "a.csv"
    code, _, _ = _run(capsys, "continue", "--domain", HALF, "--n", "128", "--mode", "trivial-one",
                      "--output", str(a))
    assert code == 0
    cols, rows = _table(a.read_text())
    assert "fold_flag" in cols and "gamma1" in cols
    assert sum(int(r[cols.index("fold_flag")]) for r in rows) == 1
    code, out, _ = _run(capsys, "diagram", "--domain", HALF, "--n", "128", "--inputs", f"{a},{a}")
    assert code == 0
    b = tmp_path / "b.csv"
    _run(capsys, "continue", "--domain", TWO_PI, "--n", "128", "--mode", "trivial-one",
         "--max-lambda", "5", "--output", str(b))
    assert _run(capsys, "diagram", "--domain", HALF, "--inputs", f"{a},{b}")[0] == 2


def test_asympt_lower_branch(capsys):
    code, out, _ = _run(capsys, "asympt", "--domain", HALF, "--n", "256", "--mode", "lower-branch",
                        "--lambdas", "1e-4,1e-3,1e-2")
    assert code == 0
    slope_line = [l for l in out.splitlines() if "slope" in l][0]
    slope = float(slope_line.split("=")[-1])
    assert abs(slope - 2) < 0.1


def test_oracle_count(capsys):
    code, out, _ = _run(capsys, "oracle", "--domain", HALF, "--mode", "count", "--lambda", "0.02")
    assert code == 0
    assert "count" in out
