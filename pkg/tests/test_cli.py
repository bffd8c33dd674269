import csv

import pytest

from asgard import cli
from asgard.errors import NumericalError


def main(*argv):
    return cli.main(list(argv))


def test_solve_demo(tmp_path, capsys):
    assert main("solve", "--demo", "--kmax", "5", "--out", str(tmp_path)) == 0
    rows = list(csv.DictReader(open(tmp_path / "trace.csv")))
    assert len(rows) == 6
    assert float(rows[1]["F_primal"]) == pytest.approx(1.0)
    assert float(rows[1]["gap_cert"]) == pytest.approx(0.0, abs=1e-12)
    assert "F=1" in capsys.readouterr().out


def test_solve_nesterov_demo(tmp_path):
    assert main("solve", "--demo", "--algo", "nesterov", "--beta0", "1.0", "--kmax", "3",
                "--out", str(tmp_path)) == 0
    rows = list(csv.DictReader(open(tmp_path / "trace.csv")))
    assert rows[-1]["algorithm"] == "nesterov"


def test_usage_errors(tmp_path):
    assert main("solve", "--demo", "--kmax", "0", "--out", str(tmp_path)) == 2
    assert main("solve", "--instance", str(tmp_path / "missing"), "--out", str(tmp_path)) == 2
    assert main("solve", "--demo", "--beta0", "-3", "--out", str(tmp_path)) == 2
    assert main("frobnicate") == 2
    assert main("experiment", "--out", str(tmp_path)) == 2


def test_case2_needs_rho(tmp_path):
    assert main("solve", "--demo", "--regime", "case2", "--out", str(tmp_path)) == 2


def test_bad_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main("solve", "--demo", "--out", str(blocker / "sub")) == 2


def test_numerical_abort_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericalError("non-finite iterate at iteration 3", iteration=3)

    monkeypatch.setattr(cli, "run", boom)
    assert main("solve", "--demo", "--out", str(tmp_path)) == 3


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# demo run\nkmax = 4\nbeta0 = 2.0\n")
    out1 = tmp_path / "a"
    assert main("solve", "--demo", "--config", str(cfg), "--out", str(out1)) == 0
    rows = list(csv.DictReader(open(out1 / "trace.csv")))
    assert len(rows) == 5 and float(rows[0]["beta_k"]) == 2.0
    out2 = tmp_path / "b"
    assert main("solve", "--demo", "--config", str(cfg), "--kmax", "2", "--out", str(out2)) == 0
    rows = list(csv.DictReader(open(out2 / "trace.csv")))
    assert len(rows) == 3 and float(rows[0]["beta_k"]) == 2.0


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense line\n")
    assert main("solve", "--demo", "--config", str(bad), "--out", str(tmp_path)) == 2
    bad.write_text("colour = blue\n")
    assert main("solve", "--demo", "--config", str(bad), "--out", str(tmp_path)) == 2
    bad.write_text("kmax = many\n")
    assert main("solve", "--demo", "--config", str(bad), "--out", str(tmp_path)) == 2
    assert main("solve", "--demo", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)) == 2


def test_solve_generated_instance_roundtrip(tmp_path):
    out = tmp_path / "gen"
    args = ["--p", "20", "--n", "8", "--s", "3", "--rho", "0", "--seed", "2", "--kmax", "30"]
    assert main("solve", *args, "--beta0", "1.0", "--save-instance", "--out", str(out)) == 0
    first = (out / "trace.csv").read_text()
    out2 = tmp_path / "again"
    assert main("solve", "--instance", str(out / "instance"), "--beta0", "1.0", "--kmax", "30",
                "--out", str(out2)) == 0
    # the saved bundle reproduces the trace, apart from wall-clock time
    drop = lambda text: [r[:-2] for r in csv.reader(text.splitlines())]
    assert drop(first) == drop((out2 / "trace.csv").read_text())


def test_verify_passes(tmp_path, capsys):
    assert main("verify", "--horizon", "2000", "--out", str(tmp_path)) == 0
    rows = list(csv.reader(open(tmp_path / "verification.csv")))
    assert rows[0] == ["k", "quantity", "measured", "bound", "slack", "pass"]
    assert rows[-1][0] == "#summary" and rows[-1][2] == "violations=0"
    assert "passed" in capsys.readouterr().out


def test_verify_negative_controls(tmp_path):
    assert main("verify", "--horizon", "2000", "--tamper-tau", "1.05", "--out", str(tmp_path / "t")) == 1
    assert main("verify", "--horizon", "2000", "--illegal-beta0", "--out", str(tmp_path / "b")) == 1
    rows = list(csv.reader(open(tmp_path / "b" / "verification.csv")))
    assert any(r[5] == "0" for r in rows[1:-1])


def test_experiment_outputs_are_reproducible(tmp_path):
    args = ["experiment", "--exp", "3", "--instances", "1", "--kmax", "40", "--p", "30", "--n", "12",
            "--s", "3", "--cache", str(tmp_path / "cache")]
    assert main(*args, "--out", str(tmp_path / "r1")) == 0
    assert main(*args, "--out", str(tmp_path / "r2")) == 0
    for name in ("exp3_aggregate.csv", "exp3_instances.csv", "exp3.svg"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    assert (tmp_path / "r1" / "exp3.png").stat().st_size > 0
