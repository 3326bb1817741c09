import json
import re

import numpy as np
import pytest

from flmchange.cli import main, read_residuals
from flmchange.funcdata import save_dataset
from flmchange.limits import load_table, table_filename
from flmchange.seqproc import ResidualSample, StatisticKind, run_test
from flmchange.simlab import ErrorSpec, SimConfig, run_experiment, simulate_dataset


def verdict(out):
    line = [x for x in out.splitlines() if x.startswith("kind=")]
    assert len(line) == 1
    return dict(kv.split("=", 1) for kv in line[0].split())


def _residual_file(path, values):
    path.write_text("residual\n" + "\n".join(repr(float(v)) for v in values) + "\n")
    return path


@pytest.mark.parametrize("verb", ["fit", "test", "critval", "simulate", "plot"])
def test_help_per_verb(verb, capsys):
    assert main([verb, "--help"]) == 0
    assert verb in capsys.readouterr().out


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["test", "--residuals", "r.csv", "--bogus"]) == 2
    assert main(["test"]) == 2  # one input source is required
    assert main(["simulate", "--family", "laplace", "--delta", "0", "--n", "50"]) == 2
    assert "usage" in capsys.readouterr().err


def test_runtime_errors(tmp_path, capsys):
    assert main(["fit", str(tmp_path / "missing.csv")]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("y,0,0.5,1\n1,0,0,0\n")
    assert main(["fit", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "error" in err and "n < 2" in err
    nan = _residual_file(tmp_path / "nan.csv", [1.0, float("nan"), 2.0])
    assert main(["test", "--residuals", str(nan), "-o", str(tmp_path)]) == 1
    assert main(["critval", "--M", "10", "--R", "1000", "-o", str(tmp_path)]) == 1


def test_identical_residuals_accept(tmp_path, capsys):
    path = _residual_file(tmp_path / "r.csv", np.full(25, 0.75))
    assert main(["test", "--residuals", str(path), "-o", str(tmp_path)]) == 0
    v = verdict(capsys.readouterr().out)
    assert float(v["statistic"]) == 0.0 and v["decision"] == "accept"
    assert v["kind"] == "ks" and v["p_value"] == "1.0"
    lines = (tmp_path / "process.csv").read_text().splitlines()
    assert lines[0] == "t,sup_abs,cvm" and len(lines) == 25


def test_critval_then_test(tmp_path, capsys):
    out = tmp_path / "tab"
    args = ["critval", "--M", "50", "--R", "1000", "--levels", "0.95", "--seed", "4", "-o", str(out)]
    assert main(args) == 0
    printed = capsys.readouterr().out
    assert "ks 0.95" in printed
    qtab = out / table_filename("ks", 50, 1000, 4)
    table = load_table(qtab)
    assert table.levels == (0.95,)
    csv_lines = (out / "critical_values.csv").read_text().splitlines()
    assert len(csv_lines) == 1 + 3
    rng = np.random.default_rng(0)
    for values in (rng.standard_normal(80), np.r_[rng.standard_normal(40), 3 * rng.standard_normal(40)]):
        path = _residual_file(tmp_path / "r.csv", values)
        assert main(["test", "--residuals", str(path), "--table", str(qtab), "-o", str(tmp_path)]) == 0
        v = verdict(capsys.readouterr().out)
        q = table.quantile(0.95)
        assert float(v["critical_value"]) == pytest.approx(q, rel=1e-12)
        manual = float(v["statistic"]) > q
        assert (v["decision"] == "reject") == manual
        direct = run_test(ResidualSample.from_values(values), "ks", 0.05, table)
        assert direct.reject == manual


def test_table_kind_mismatch(tmp_path, capsys):
    out = tmp_path / "tab"
    assert main(["critval", "--M", "50", "--R", "1000", "-o", str(out)]) == 0
    qtab = out / table_filename("cvm-sup", 50, 1000, 20240601)
    path = _residual_file(tmp_path / "r.csv", np.arange(10.0))
    assert main(["test", "--residuals", str(path), "--table", str(qtab), "-o", str(tmp_path)]) == 1
    assert main(["test", "--residuals", str(path), "--table", str(qtab), "--kind", "cvm-sup",
                 "-o", str(tmp_path)]) == 0


def test_simulate_byte_identical(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        args = ["simulate", "--family", "var_change", "--delta", "0", "0.5", "--n", "40",
                "--reps", "12", "--seed", "1", "-o", str(d)]
        assert main(args) == 0
        outs.append(d)
    for f in ("results_var_change.csv", "rejection_var_change.csv", "rejection_var_change.svg"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    assert main(["plot", str(outs[0] / "results_var_change.csv"), "-o", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "rejection_var_change.csv").read_bytes() == (
        outs[0] / "rejection_var_change.csv"
    ).read_bytes()


def test_fit_then_test_matches_simulate(tmp_path, capsys, limit_tables):
    cfg = SimConfig(50, ErrorSpec("skew", 0.3), seed=17, repetitions=3)
    row = run_experiment(cfg, limit_tables, workers=1)
    for rep in range(3):
        data, _ = simulate_dataset(cfg, rep)
        save_dataset(data, tmp_path / "d.csv")
        res = tmp_path / "res.csv"
        assert main(["fit", str(tmp_path / "d.csv"), "--residuals-out", str(res), "-o", str(tmp_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n"] == 50 and report["basis_size"] == 40
        assert main(["test", "--residuals", str(res), "-o", str(tmp_path)]) == 0
        v = verdict(capsys.readouterr().out)
        assert float(v["statistic"]) == row.statistics[rep]
        assert float(v["theta_hat"]) == row.theta_hats[rep]
        # fitting inside `test` gives the same answer as the two-step path
        assert main(["test", "--data", str(tmp_path / "d.csv"), "-o", str(tmp_path)]) == 0
        assert verdict(capsys.readouterr().out) == v


def test_fit_outputs(tmp_path, capsys):
    cfg = SimConfig(40, ErrorSpec("normal"), seed=2)
    data, _ = simulate_dataset(cfg, 0)
    save_dataset(data, tmp_path / "d.csv")
    assert main(["fit", str(tmp_path / "d.csv"), "--lambda-count", "5", "-o", str(tmp_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["lambda"] in np.logspace(-10, 2, 5)
    lines = (tmp_path / "beta.csv").read_text().splitlines()
    assert lines[0] == "t,beta" and len(lines) == 301
    assert main(["fit", str(tmp_path / "d.csv"), "--lambda-min", "0", "-o", str(tmp_path)]) == 1


def test_read_residuals(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("# note\nres,extra\n1.5,x\n\n-2,y\n")
    np.testing.assert_array_equal(read_residuals(p), [1.5, -2.0])
    p.write_text("1\nfoo\n")
    with pytest.raises(Exception, match="non-numeric"):
        read_residuals(p)


def test_verdict_line_format(tmp_path, capsys):
    path = _residual_file(tmp_path / "r.csv", np.r_[np.zeros(10), np.ones(10)])
    assert main(["test", "--residuals", str(path), "--kind", "cvm-int", "--level", "0.1",
                 "-o", str(tmp_path)]) == 0
    out = capsys.readouterr().out.strip()
    assert re.fullmatch(
        r"kind=cvm-int statistic=\S+ critical_value=\S+ p_value=\S+ decision=(reject|accept) "
        r"theta_hat=0\.5 n=20 level=0\.1",
        out,
    )
    assert StatisticKind.parse(verdict(out)["kind"]) is StatisticKind.CVM_INT
