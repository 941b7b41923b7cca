"""Command line interface: run, sweep, validate, report.

Exit codes: 0 success, 1 config error, 2 acceptance-check failure when
invoked with ``--check``.  Worker count for trial sharding comes from
ANYLOOP_WORKERS (scenario runners that shard honor it; vectorized ones
ignore it).
"""

import argparse
import copy
import json
import os
import sys

import numpy as np

from anyloop import config as cfgmod
from anyloop.io import read_csv
from anyloop.scenarios import run_scenario


def _load(path: str) -> dict:
    try:
        return cfgmod.load_config(path)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read config {path}: {e}", file=sys.stderr)
        sys.exit(1)


def _validate_or_die(cfg: dict):
    errs = cfgmod.validate(cfg)
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        sys.exit(1)


def _check(cfg: dict, summary: dict) -> bool:
    """Scheme-specific pass/fail for --check runs."""
    scheme = cfg["scheme"]
    if scheme == "example1":
        return bool(summary.get("bound_holds"))
    if scheme == "erasure-reset":
        return (summary.get("second_moment_verdict") == "diverging"
                and summary.get("first_moment_verdict") == "bounded"
                and bool(summary.get("series_exceeded")))
    if scheme == "feedback-sufficiency":
        return summary.get("pathwise_bound_violations") == 0
    if scheme == "nofeedback-trellis":
        return summary.get("bound_violations") == 0
    if scheme == "dance":
        return summary.get("decode_errors") == 0 and bool(summary.get("symbols_identical"))
    if scheme == "awgn":
        return summary.get("mean_input_power", 1e99) <= summary.get("power_limit", 0)
    if scheme == "passive-observer":
        return bool(summary.get("mse_leq_half_k"))
    return False


def cmd_run(args) -> int:
    cfg = _load(args.config)
    _validate_or_die(cfg)
    if args.output_dir:
        cfg["output_dir"] = args.output_dir
    out = run_scenario(cfg)
    for k, v in sorted(out["summary"].items()):
        print(f"{k}: {v}")
    if args.check and not _check(cfg, out["summary"]):
        print("acceptance check FAILED", file=sys.stderr)
        return 2
    return 0


def _set_path(tree: dict, dotted: str, value):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_sweep(args) -> int:
    base = _load(args.config)
    _validate_or_die(base)
    rc = 0
    for raw in args.values:
        cfg = copy.deepcopy(base)
        value = _parse_value(raw)
        _set_path(cfg, args.param, value)
        errs = cfgmod.validate(cfg)
        if errs:
            print(f"[{args.param}={raw}] config error: {'; '.join(errs)}",
                  file=sys.stderr)
            rc = 1
            continue
        if cfg.get("output_dir"):
            tag = args.param.replace(".", "_")
            cfg["output_dir"] = os.path.join(cfg["output_dir"], f"{tag}={raw}")
        out = run_scenario(cfg)
        line = ", ".join(f"{k}={v}" for k, v in sorted(out["summary"].items()))
        print(f"[{args.param}={raw}] {line}")
        if args.check and not _check(cfg, out["summary"]):
            rc = 2
    return rc


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    errs = cfgmod.validate(cfg)
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    print("config ok")
    return 0


def cmd_report(args) -> int:
    """Recompute summary statistics from raw CSV logs."""
    for path in args.logs:
        header, rows = read_csv(path)
        name = os.path.basename(path)
        if header == ("trial", "t", "x"):
            xs = np.array([float(r[2]) for r in rows])
            print(f"{name}: {len(rows)} rows, sup|x| = {float(np.abs(xs).max())!r}, "
                  f"mean x^2 = {float(np.mean(xs**2))!r}")
        elif header == ("d", "g_hat", "ci_lo", "ci_hi"):
            nz = [(float(r[0]), float(r[1])) for r in rows if float(r[1]) > 0]
            tail = nz[-1] if nz else None
            print(f"{name}: {len(rows)} delays, last nonzero g_hat at {tail}")
        elif header == ("key", "value"):
            for k, v in rows:
                print(f"{name}: {k} = {v}")
        else:
            print(f"{name}: {len(rows)} rows of schema {header}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="anyloop",
        description="Monte Carlo harness for control loops over noisy channels",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--check", action="store_true",
                       help="exit 2 unless the scheme's acceptance check passes")
    p_run.add_argument("--output-dir", default=None)
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a config across parameter values")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True,
                         help="dotted config path, e.g. channel.delta")
    p_sweep.add_argument("--values", required=True, nargs="+")
    p_sweep.add_argument("--check", action="store_true")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")
    p_val.set_defaults(fn=cmd_validate)

    p_rep = sub.add_parser("report", help="recompute summaries from raw CSV logs")
    p_rep.add_argument("logs", nargs="+")
    p_rep.set_defaults(fn=cmd_report)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
