"""Deterministic CSV artifacts with fixed schemas.

Floats are written with repr (shortest round-trip), so identical runs
produce identical bytes and every summary can be recomputed from the raw
rows.
"""

import csv
import os
from typing import Iterable, Sequence

__all__ = [
    "write_csv",
    "read_csv",
    "SCHEMAS",
]

SCHEMAS = {
    "states": ("trial", "t", "x"),
    "tails": ("t", "m", "p_hat", "ci_lo", "ci_hi"),
    "tails_pooled": ("m", "p_hat", "ci_lo", "ci_hi"),
    "moments": ("eta", "t", "value", "ci_lo", "ci_hi"),
    "moment_verdicts": ("eta", "verdict", "mk_z", "final"),
    "reliability": ("d", "g_hat", "ci_lo", "ci_hi"),
    "estimate_table": ("trial", "t", "d", "prefix_error"),
    "trellis": ("trial", "stage", "true_bin", "ml_bin", "error_depth"),
    "dance": ("t", "b_true", "b_decoded", "residual"),
    "summary": ("key", "value"),
}


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str, schema: str, rows: Iterable[Sequence]):
    """Write rows under a named schema; returns the path."""
    header = SCHEMAS[schema]
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row width {len(row)} != schema {schema}")
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str):
    """Read a schema'd CSV back into (header, list-of-rows-of-str)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        return header, [tuple(row) for row in r]
