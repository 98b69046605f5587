import math

import numpy as np
import pytest

from vmma.cli import CSV_HEADER, ConfigError, main, parse_config
from vmma.function_space import read_solution, space_from_header
from vmma.problem import builtin_problem

MINIMAL = """# spectral capture study
study = test2
problem = test2a
disc = spectral
N = 4, 6, 8   # three points
eps = 0.001
"""


def test_parse_minimal():
    cfg = parse_config(MINIMAL)
    assert cfg.points == 3 and cfg.N == [4, 6, 8] and cfg.eps == [0.001]


@pytest.mark.parametrize("text,line", [
    ("study = test1\nproblem = test1a\ndisc = spectral\neps = 0.1, 0.2\n", 4),
    ("study = test1\nproblem = test1a\ndisc = spectral\neps = 0.1\ngamma = 0.5\n", 5),
    ("study = test2\ncolour = red\n", 2),
    ("study = test2\nthis line is junk\n", 2),
    ("study = test2\nN = 4, x\n", 2),
    ("study = test2\nproblem = test2a\nproblem = test2b\n", 3),
    ("study = test3\nproblem = test3a\ndisc = hermite_fem\neps = 0.25\ngamma = 0.3\n", 5),
])
def test_config_errors_carry_line(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_config_requires_keys():
    with pytest.raises(ConfigError):
        parse_config("study = test2\n")


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    assert "--dump-solutions" in capsys.readouterr().out


def test_missing_config_exit_code(tmp_path):
    assert main(["--config", str(tmp_path / "nope.cfg")]) == 2


def test_flag_errors_exit_code(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text(MINIMAL)
    assert main(["--config", str(cfg), "--gamma", "0.5"]) == 2
    assert main(["--config", str(cfg), "--eps", "0.001,0.01"]) == 2


def test_run_writes_results_and_dumps(tmp_path, capsys):
    cfg = tmp_path / "a.cfg"
    cfg.write_text(MINIMAL)
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--out", str(out), "--dump-solutions"]) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER and len(lines) == 4
    assert [ln.split(",")[5] for ln in lines[1:]] == ["4", "6", "8"]
    assert len(capsys.readouterr().out.strip().splitlines()) == 3
    dump = out / "test2a_spectral_0.001_8.sol"
    kind, dim, token, eps, coeffs = read_solution(dump)
    space = space_from_header(kind, dim, token)
    p = builtin_problem("test2a")
    x = np.array([[0.3, 0.7]])
    assert abs(space.evaluate(coeffs, x)[0][0] - p.exact.u(x)[0]) <= 1e-10


def test_output_is_deterministic(tmp_path):
    args = ["--study", "test2", "--problem", "test2b", "--disc", "spectral", "--N", "4,6",
            "--eps", "0.001"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_float_format_has_17_digits(tmp_path):
    args = ["--study", "test2", "--problem", "test2a", "--disc", "hermite_fem", "--mesh", "4",
            "--eps", "0.001", "--out", str(tmp_path)]
    assert main(args) == 0
    row = (tmp_path / "results.csv").read_text().splitlines()[1].split(",")
    header = CSV_HEADER.split(",")
    err = row[header.index("err_L2")]
    assert err == format(float(err), ".17g") and math.isfinite(float(err))
    assert row[header.index("N")] == "4x4"


def test_strict_nonconvergence_exit(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("study = test1\nproblem = test1a\ndisc = spectral\nN = 8\neps = 0.5\n"
                   "max_iters = 1\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert main(["--config", str(cfg), "--out", str(tmp_path), "--strict"]) == 3
    row = (tmp_path / "results.csv").read_text().splitlines()[1].split(",")
    assert row[CSV_HEADER.split(",").index("converged")] == "false"


def test_linear_failure_exit(tmp_path, monkeypatch):
    import vmma.nonlinear_solver as ns
    from vmma.linear_solver import SingularMatrixError

    def broken(A):
        raise SingularMatrixError(0)

    monkeypatch.setattr(ns, "factor", broken)
    args = ["--study", "test2", "--problem", "test2a", "--disc", "spectral", "--N", "4",
            "--eps", "0.001", "--out", str(tmp_path)]
    assert main(args) == 4
