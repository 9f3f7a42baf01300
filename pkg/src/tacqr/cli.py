"""Command-line front end.

Every subcommand reads one JSON config (``--config``); ``--seed``, ``--out``
and ``--threads`` override the file's fields. All results are computed
before anything is written, and floats are printed with 9 significant
digits so that reruns give identical bytes.

Subcommands
-----------
simulate     replicates.csv, summary.json, config.echo.json
fit-predict  intervals.csv, config.echo.json
oracle       oracle.csv, config.echo.json
diagnose     diagnostics.json, config.echo.json
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .data import DataError, load_csv, read_numeric_csv
from .dgp import conditional_law
from .evaluation import run_diagnostics, run_replicate, run_replicates
from .conformal import predict_intervals
from .oracle import check_balanced_density, gap_lower_bound, hdr, oracle_allocation

__all__ = ["main", "build_parser", "fmt"]

REPLICATE_COLUMNS = ("method", "replicate", "coverage", "mean_length", "mean_core_length", "Q",
                     "infinite_Q_flag", "seed")
INTERVAL_COLUMNS = ("row_id", "lo", "hi", "tau_hat", "Q")
ORACLE_COLUMNS = ("x", "tau_star", "lo", "hi", "L_star", "L_star_eps", "hdr_components",
                  "hdr_length", "gap_bound", "balanced_density_residual")


def fmt(v) -> str:
    """9 significant digits; ``inf``/``-inf`` tokens; NaN and None as blank."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    s = f"{v:.9g}"
    return "0" if s == "-0" else s


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return None if obj is None else bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(f"{v:.9g}")
    return obj


def _dumps(obj) -> str:
    return json.dumps(_json_ready(obj), indent=2, sort_keys=True) + "\n"


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _write_all(out: Path, files: dict):
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"out: cannot write to {out} ({exc})") from None


# ------------------------------------------------------------------ commands

def cmd_simulate(cfg: ExperimentConfig) -> dict:
    if cfg.dgp is None:
        raise ConfigError("dgp: simulate needs a dgp")
    results, summary = run_replicates(cfg)
    rows = [(r.method, r.replicate, r.coverage, r.mean_length, r.mean_core_length, r.Q,
             int(r.infinite_Q), r.seed) for r in results]
    return {
        "replicates.csv": _csv_text(REPLICATE_COLUMNS, rows),
        "summary.json": _dumps(summary),
        "config.echo.json": cfg.dumps(),
    }


def _prediction_rows(path, names: list[str]) -> np.ndarray:
    header, values = read_numeric_csv(path)
    missing = [c for c in names if c not in header]
    if missing:
        raise DataError(f"{path}: missing covariate columns {missing}")
    return values[:, [header.index(c) for c in names]]


def cmd_fit_predict(cfg: ExperimentConfig) -> dict:
    if cfg.csv is None:
        raise ConfigError("csv: fit-predict needs an input CSV")
    if cfg.predict_csv is None:
        raise ConfigError("predict_csv: fit-predict needs a prediction CSV (or --predict)")
    if cfg.estimator == "oracle":
        raise ConfigError("estimator: 'oracle' is unavailable for CSV input")
    data = load_csv(cfg.csv, cfg.response_column)
    header, _ = read_numeric_csv(cfg.csv)
    names = [c for c in header if c != cfg.response_column]
    xnew = _prediction_rows(cfg.predict_csv, names)
    run = run_replicate(cfg.with_overrides(replicates=1), 0, data=data)
    method = cfg.methods[0]
    pred = run.predictors[method]
    iv = predict_intervals(pred, xnew)
    rows = [(i, iv.lo[i], iv.hi[i], iv.tau_hat[i], pred.Q) for i in range(xnew.shape[0])]
    return {"intervals.csv": _csv_text(INTERVAL_COLUMNS, rows), "config.echo.json": cfg.dumps()}


def oracle_rows(cfg: ExperimentConfig) -> list[tuple]:
    if cfg.dgp is None:
        raise ConfigError("dgp: oracle needs a law (dgp)")
    law = conditional_law(cfg.dgp)
    rows = []
    for x in cfg.x:
        row = np.array([x])
        full = oracle_allocation(law, row, cfg.alpha)
        trunc = oracle_allocation(law, row, cfg.alpha, epsilon=cfg.epsilon)
        h = hdr(law, row, cfg.alpha)
        comps = ";".join(f"{fmt(a)}:{fmt(b)}" for a, b in h.components)
        gap = gap_lower_bound(h, law, row) if len(h.components) == 2 else None
        bal = check_balanced_density(law, row, full.tau_star, cfg.alpha)
        rows.append((x, full.tau_star, full.lo, full.hi, full.length, trunc.length, comps,
                     h.total_length, gap, bal.value))
    return rows


def cmd_oracle(cfg: ExperimentConfig) -> dict:
    rows = oracle_rows(cfg)
    return {"oracle.csv": _csv_text(ORACLE_COLUMNS, rows), "config.echo.json": cfg.dumps()}


def cmd_diagnose(cfg: ExperimentConfig) -> dict:
    if cfg.csv is not None or cfg.dgp is None:
        raise ConfigError("diagnose needs a simulation dgp with a known conditional law; "
                          "CSV input has no law to compare against")
    report = run_diagnostics(cfg)
    return {"diagnostics.json": _dumps(report), "config.echo.json": cfg.dumps()}


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-predict": cmd_fit_predict,
    "oracle": cmd_oracle,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tacqr", description="Tail-allocation CQR harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--threads", type=int, help="worker threads for replicates")
        if name == "fit-predict":
            p.add_argument("--predict", help="CSV of covariate rows to predict")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        over = {"seed": args.seed, "out": args.out, "threads": args.threads,
                "predict_csv": getattr(args, "predict", None)}
        cfg = cfg.with_overrides(**over)
        cfg.validate()
        files = COMMANDS[args.command](cfg)
        _write_all(Path(cfg.out), files)
    except (ConfigError, DataError, FileNotFoundError) as exc:
        print(f"tacqr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
