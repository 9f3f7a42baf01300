import csv
import json
import math

import numpy as np
import pytest

from tacqr.cli import fmt, main
from tacqr.config import ConfigError, ExperimentConfig, load_config


def _config(tmp_path, name="cfg.json", **d):
    p = tmp_path / name
    p.write_text(json.dumps(d), encoding="utf-8")
    return str(p)


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_fmt():
    assert fmt(math.inf) == "inf" and fmt(-math.inf) == "-inf"
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(float("nan")) == "" and fmt(None) == ""
    assert fmt(-0.0) == "0" and fmt(7) == "7" and fmt(True) == "1"


def test_config_round_trip_and_defaults(tmp_path):
    cfg = ExperimentConfig.from_dict({"dgp": {"kind": "M4", "params": {"exp_rate": 2}},
                                      "support": [0, 10]})
    d = json.loads(cfg.dumps())
    assert d["epsilon"] == 0.005 and d["include_half"] is True
    assert d["dgp"]["params"]["normal_sd"] == 1.0
    assert ExperimentConfig.from_dict(d) == cfg
    p = tmp_path / "c.json"
    p.write_text(cfg.dumps(), encoding="utf-8")
    assert load_config(p) == cfg


@pytest.mark.parametrize("bad,msg", [
    ({"alpha": 1.5}, "alpha"),
    ({"epsilon": 0.06}, "epsilon"),
    ({"methods": []}, "methods"),
    ({"methods": ["CHR"]}, "methods"),
    ({"estimator": "forest"}, "estimator"),
    ({"fractions": [0.5, 0.5, 0.5]}, "fractions"),
    ({"n": 2.5}, "n"),
    ({"colour": 1}, "unknown"),
    ({"diagnostics": {"foo": 1}}, "diagnostics"),
])
def test_config_field_errors(bad, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig.from_dict({"dgp": {"kind": "M1"}, **bad})


def test_simulate_outputs_and_determinism(tmp_path):
    out = tmp_path / "out"
    cfg = _config(tmp_path, dgp={"kind": "M1"}, n=500, replicates=100, out=str(out))
    assert main(["simulate", "--config", cfg]) == 0
    rows = _rows(out / "replicates.csv")
    assert len(rows) == 300
    assert list(rows[0]) == ["method", "replicate", "coverage", "mean_length",
                             "mean_core_length", "Q", "infinite_Q_flag", "seed"]
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) == {"TA", "EqualTailCQR", "ResidualSC"}
    echo = json.loads((out / "config.echo.json").read_text())
    assert echo["epsilon"] == 0.005 and echo["replicates"] == 100
    first = _bytes(out)
    assert main(["simulate", "--config", cfg]) == 0
    assert _bytes(out) == first


def test_flag_overrides(tmp_path):
    cfg = _config(tmp_path, dgp={"kind": "M2"}, n=200, replicates=2, out=str(tmp_path / "a"))
    assert main(["simulate", "--config", cfg, "--seed", "5", "--out", str(tmp_path / "b"),
                 "--threads", "2"]) == 0
    echo = json.loads((tmp_path / "b" / "config.echo.json").read_text())
    assert echo["seed"] == 5 and echo["threads"] == 2
    assert not (tmp_path / "a").exists()


def test_invalid_alpha_rejected_before_compute(tmp_path, capsys):
    out = tmp_path / "never"
    cfg = _config(tmp_path, dgp={"kind": "M1"}, alpha=1.5, out=str(out))
    assert main(["simulate", "--config", cfg]) == 2
    assert "alpha" in capsys.readouterr().err
    assert not out.exists()


def _train_csv(tmp_path, n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (n, 2))
    y = x[:, 0] + rng.exponential(1.0, n)
    p = tmp_path / f"train{n}.csv"
    np.savetxt(p, np.column_stack([x, y]), delimiter=",", header="a,b,y", comments="")
    q = tmp_path / "new.csv"
    np.savetxt(q, rng.uniform(0, 1, (10, 2)), delimiter=",", header="a,b", comments="")
    return str(p), str(q)


def test_fit_predict(tmp_path):
    train, new = _train_csv(tmp_path, 400)
    out = tmp_path / "fp"
    cfg = _config(tmp_path, csv=train, predict_csv=new, support=[0, 1e300], out=str(out))
    assert main(["fit-predict", "--config", cfg]) == 0
    rows = _rows(out / "intervals.csv")
    assert len(rows) == 10
    assert list(rows[0]) == ["row_id", "lo", "hi", "tau_hat", "Q"]
    assert all(float(r["lo"]) >= 0 for r in rows)
    assert all(float(r["lo"]) <= float(r["hi"]) for r in rows)


def test_fit_predict_degenerate_calibration(tmp_path):
    train, new = _train_csv(tmp_path, 20)
    out = tmp_path / "fp"
    cfg = _config(tmp_path, csv=train, out=str(out), estimator_params={"k": 3})
    assert main(["fit-predict", "--config", cfg, "--predict", new]) == 0
    for r in _rows(out / "intervals.csv"):
        assert (r["lo"], r["hi"], r["Q"]) == ("-inf", "inf", "inf")


def test_fit_predict_csv_error(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("a,y\n1,2\nx,3\n", encoding="utf-8")
    cfg = _config(tmp_path, csv=str(p), predict_csv=str(p), out=str(tmp_path / "o"))
    assert main(["fit-predict", "--config", cfg]) == 2
    assert "row 3" in capsys.readouterr().err


def _oracle(tmp_path, dgp, **kw):
    out = tmp_path / "orc"
    cfg = _config(tmp_path, dgp=dgp, out=str(out), **kw)
    assert main(["oracle", "--config", cfg]) == 0
    rows = _rows(out / "oracle.csv")
    assert list(rows[0]) == ["x", "tau_star", "lo", "hi", "L_star", "L_star_eps",
                             "hdr_components", "hdr_length", "gap_bound",
                             "balanced_density_residual"]
    return rows


def test_oracle_normal(tmp_path):
    (r,) = _oracle(tmp_path, {"kind": "CustomMixture",
                              "params": {"components": [[1.0, "normal", {"mu": 0, "sigma": 1}]]}})
    assert float(r["tau_star"]) == pytest.approx(0.05, abs=1e-6)
    assert float(r["L_star"]) == pytest.approx(3.2897, abs=1e-4)
    assert r["gap_bound"] == ""


def test_oracle_exponential(tmp_path):
    (r,) = _oracle(tmp_path, {"kind": "CustomMixture",
                              "params": {"components": [[1.0, "exponential", {"rate": 1}]]}})
    assert float(r["tau_star"]) == 0.0
    assert float(r["L_star"]) == pytest.approx(2.3026, abs=1e-4)
    assert float(r["L_star_eps"]) == pytest.approx(2.3488, abs=1e-4)


def test_oracle_two_height_mixture(tmp_path):
    comps = [[0.6, "uniform", {"a": 0, "b": 1}], [0.4, "uniform", {"a": 2, "b": 3}]]
    (r,) = _oracle(tmp_path, {"kind": "CustomMixture", "params": {"components": comps}})
    assert float(r["hdr_length"]) == pytest.approx(1.75, abs=1e-4)
    assert float(r["gap_bound"]) == pytest.approx(2.75, abs=1e-4)
    assert len(r["hdr_components"].split(";")) == 2


def test_oracle_covariate_list(tmp_path):
    rows = _oracle(tmp_path, {"kind": "M1"}, x=[0.1, 0.5, 0.9])
    assert [float(r["x"]) for r in rows] == [0.1, 0.5, 0.9]
    for r in rows:
        assert float(r["L_star"]) <= float(r["L_star_eps"]) + 1e-12
        assert float(r["balanced_density_residual"]) <= 1e-3


def test_oracle_unknown_family(tmp_path, capsys):
    cfg = _config(tmp_path, dgp={"kind": "CustomMixture",
                                 "params": {"components": [[1.0, "cauchy", {}]]}})
    assert main(["oracle", "--config", cfg]) == 2
    assert "cauchy" in capsys.readouterr().err


def test_diagnose(tmp_path):
    out = tmp_path / "dg"
    cfg = _config(tmp_path, dgp={"kind": "ExpError"}, n=2000, replicates=3,
                  estimator="oracle", out=str(out), diagnostics={"points": 10})
    assert main(["diagnose", "--config", cfg]) == 0
    rep = json.loads((out / "diagnostics.json").read_text())
    assert rep["corecomp_violations"]["count"] == 0
    assert rep["grid_residuals"]["pass"] is True
    assert rep["transfer_gap"]["pass"] is True
    assert rep["truncation_cost"]["pass"] is True
    before = _bytes(out)
    assert main(["diagnose", "--config", cfg]) == 0
    assert _bytes(out) == before


def test_diagnose_refuses_csv(tmp_path, capsys):
    train, _ = _train_csv(tmp_path, 50)
    cfg = _config(tmp_path, csv=train, out=str(tmp_path / "o"))
    assert main(["diagnose", "--config", cfg]) == 2
    assert "law" in capsys.readouterr().err
