"""Scenario configuration: a versioned JSON document, validated field by field.

JSON keeps configs diffable and archivable; the schema is fixed at
version 1.  ``validate`` returns a list of precise error strings rather
than raising, so the CLI can show everything wrong at once.
"""

import json
import os
from typing import List

SCHEMA_VERSION = 1

SCHEMES = (
    "example1",
    "erasure-reset",
    "feedback-sufficiency",
    "nofeedback-trellis",
    "dance",
    "awgn",
    "passive-observer",
)

_DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "horizon": 100,
    "trials": 100,
    "plant": {"lam": 1.5, "omega": 1.0, "x0": 0.0},
    "channel": {},
    "scheme_params": {},
    "estimators": {
        "m_grid": [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
        "eta_grid": [1.0, 2.0],
        "delay_window": None,
    },
    "output_dir": None,
    "raw_log_limit": 2_000_000,
}


def load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    return merge_defaults(cfg)


def merge_defaults(cfg: dict) -> dict:
    out = {}
    for key, default in _DEFAULTS.items():
        if isinstance(default, dict):
            out[key] = {**default, **cfg.get(key, {})}
        else:
            out[key] = cfg.get(key, default)
    for key in cfg:
        if key not in _DEFAULTS and key != "scheme":
            out[key] = cfg[key]
    if "scheme" in cfg:
        out["scheme"] = cfg["scheme"]
    return out


def dump_config(cfg: dict, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def validate(cfg: dict) -> List[str]:
    """Field-level validation; empty list means runnable."""
    errs = []

    def need(cond, msg):
        if not cond:
            errs.append(msg)

    need(cfg.get("schema_version") == SCHEMA_VERSION,
         f"schema_version: expected {SCHEMA_VERSION}, got {cfg.get('schema_version')}")
    scheme = cfg.get("scheme")
    need(scheme in SCHEMES, f"scheme: {scheme!r} not one of {SCHEMES}")
    need(isinstance(cfg.get("seed"), int), "seed: must be an integer")
    need(isinstance(cfg.get("horizon"), int) and cfg.get("horizon", 0) > 0,
         "horizon: must be a positive integer")
    need(isinstance(cfg.get("trials"), int) and cfg.get("trials", 0) > 0,
         "trials: must be a positive integer")
    plant = cfg.get("plant", {})
    if not isinstance(plant.get("lam"), (int, float)) or plant.get("lam", 0) <= 0:
        errs.append("plant.lam: must be a positive number")
    if not isinstance(plant.get("omega"), (int, float)) or plant.get("omega", -1) < 0:
        errs.append("plant.omega: must be >= 0")
    ch = cfg.get("channel", {})
    ctype = ch.get("type")
    if scheme in ("erasure-reset", "feedback-sufficiency", "dance", "passive-observer"):
        if ctype not in (None, "erasure"):
            errs.append(f"channel.type: scheme {scheme} needs an erasure channel")
        delta = ch.get("delta", 0.5)
        if not 0 <= delta <= 1:
            errs.append("channel.delta: must be in [0, 1]")
    if scheme == "awgn":
        if ctype not in (None, "awgn"):
            errs.append("channel.type: scheme awgn needs an AWGN channel")
        if ch.get("power_limit", 1.0) <= 0 or ch.get("noise_power", 1.0) <= 0:
            errs.append("channel: power_limit and noise_power must be > 0")
    if scheme == "nofeedback-trellis":
        if ctype not in (None, "dmc"):
            errs.append("channel.type: scheme nofeedback-trellis needs a DMC")
        if ctype == "dmc" and not (ch.get("matrix") or ch.get("matrix_csv")):
            errs.append("channel.matrix: DMC needs an inline matrix or matrix_csv path")
    sp = cfg.get("scheme_params", {})
    if scheme in ("feedback-sufficiency", "dance"):
        import math
        rate = sp.get("rate")
        if rate is not None:
            from fractions import Fraction
            r = float(Fraction(str(rate)))
            if r <= math.log2(float(plant.get("lam", 1.5))):
                errs.append(
                    "scheme_params.rate: must exceed log2(lam), the plant's "
                    "intrinsic rate (stabilization below it is generically "
                    "impossible)"
                )
    est = cfg.get("estimators", {})
    mg = est.get("m_grid", [])
    if mg != sorted(mg) or any(m <= 0 for m in mg):
        errs.append("estimators.m_grid: must be positive and increasing")
    return errs
