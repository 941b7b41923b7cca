"""Error-vs-delay bookkeeping for anytime decoders.

A decoder re-estimates every past bit at every step.  For one decode time
``tau`` the quantity that matters is the age of the oldest wrong bit,
``D = tau - k_min / R``: a "prefix error at delay d" happened iff D >= d.
The empirical curve g_hat(d) over many (trial, tau) pairs estimates the
achieved anytime reliability; an exponential fit gives (K, alpha) with
g(d) ~ K * 2**(-alpha d).
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import stats

__all__ = ["AnytimeEstimateTable", "ReliabilityReport", "estimate_reliability"]


class AnytimeEstimateTable:
    """Instrumented record of a decoder's rolling bit estimates.

    Stores, per decode time, the oldest-wrong-bit delay (the only statistic
    reliability estimation needs) and optionally the full estimate vectors
    for small runs where the anytime contract itself is under test.
    """

    def __init__(self, rate, keep_full: bool = False):
        self.rate = Fraction(rate) if not isinstance(rate, Fraction) else rate
        self.keep_full = keep_full
        self.times: list[int] = []
        self.error_delays: list[float] = []  # -inf when the prefix is clean
        self.full: list[np.ndarray] = []

    def record(self, tau: int, estimates: np.ndarray, true_bits: np.ndarray):
        """Log the estimate vector produced at decode time tau."""
        est = np.asarray(estimates)
        truth = np.asarray(true_bits)[: est.shape[0]]
        if est.shape[0] != truth.shape[0]:
            raise ValueError("estimate vector longer than the true stream")
        wrong = np.nonzero(est != truth)[0]
        if wrong.size:
            k_min = int(wrong[0])
            delay = tau - k_min / float(self.rate)
        else:
            delay = -np.inf
        self.times.append(tau)
        self.error_delays.append(delay)
        if self.keep_full:
            self.full.append(est.copy())

    def record_oldest_wrong(self, tau: int, k_min):
        """Log only the oldest-wrong index (None when the prefix is clean);
        cheaper than ``record`` when the caller already scanned."""
        self.times.append(tau)
        if k_min is None:
            self.error_delays.append(-np.inf)
        else:
            self.error_delays.append(tau - k_min / float(self.rate))

    def estimates_at(self, tau: int) -> np.ndarray:
        if not self.keep_full:
            raise ValueError("table was not built with keep_full=True")
        return self.full[self.times.index(tau)]


@dataclass
class ReliabilityReport:
    """Empirical error-vs-delay curve with its exponential fit."""

    delays: np.ndarray
    g_hat: np.ndarray            # raw conditional frequencies
    g_hat_monotone: np.ndarray   # explicitly regularized (nonincreasing)
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    counts: np.ndarray
    n_samples: np.ndarray
    alpha: float
    log2_k: float
    alpha_ci: Optional[tuple] = None
    unbounded: bool = False      # zero observed errors anywhere

    def describe(self) -> str:
        if self.unbounded:
            n = int(self.n_samples.max(initial=0))
            return f"no errors observed: alpha unbounded at {n} samples"
        return f"alpha = {self.alpha:.4f}, K = 2**{self.log2_k:.3f}"

    def g_at(self, d: float) -> float:
        idx = np.searchsorted(self.delays, d)
        idx = min(idx, len(self.delays) - 1)
        return float(self.g_hat_monotone[idx])


def _clopper_pearson(k: np.ndarray, n: np.ndarray, conf: float = 0.95):
    a = (1 - conf) / 2
    k = k.astype(float)
    lo = np.where(k > 0, stats.beta.ppf(a, k, n - k + 1), 0.0)
    hi = np.where(k < n, stats.beta.ppf(1 - a, k + 1, n - k), 1.0)
    return lo, hi


def estimate_reliability(tables, d_grid=None, fit_window=None, conf: float = 0.95,
                         bootstrap: int = 0, seed: int = 0) -> ReliabilityReport:
    """Aggregate estimate tables from N trials into a reliability report.

    g_hat(d) is the fraction of (trial, decode-time) pairs with a prefix
    error at delay >= d, among pairs old enough for the event to be
    possible (tau >= d).  Intervals are Clopper-Pearson.  The (K, alpha)
    fit is least squares on log2 g_hat over ``fit_window`` (defaults to
    every delay with at least one error); the alpha CI, when requested,
    is a percentile bootstrap over trials.
    """
    tables = list(tables)
    if not tables:
        raise ValueError("no estimate tables supplied")
    delays_per_trial = [np.asarray(t.error_delays, dtype=float) for t in tables]
    times_per_trial = [np.asarray(t.times, dtype=float) for t in tables]
    all_delays = np.concatenate(delays_per_trial)
    all_times = np.concatenate(times_per_trial)
    if d_grid is None:
        d_max = int(all_times.max())
        d_grid = np.arange(0, d_max + 1)
    d_grid = np.asarray(d_grid, dtype=float)

    def curve(delays, times):
        counts = np.array([(delays >= d).sum() for d in d_grid], dtype=np.int64)
        valid = np.array([(times >= d).sum() for d in d_grid], dtype=np.int64)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(valid > 0, counts / np.maximum(valid, 1), np.nan)
        return counts, valid, g

    counts, n_samples, g_hat = curve(all_delays, all_times)
    ci_lo, ci_hi = _clopper_pearson(counts, np.maximum(n_samples, 1), conf)
    # Enforce the nonincreasing shape explicitly; raw curve is kept too.
    g_mono = np.fmin.accumulate(np.where(np.isnan(g_hat), np.inf, g_hat))
    g_mono = np.where(np.isfinite(g_mono), g_mono, np.nan)

    def fit(g):
        if fit_window is not None:
            sel = (d_grid >= fit_window[0]) & (d_grid <= fit_window[1])
        else:
            sel = np.ones_like(d_grid, dtype=bool)
        sel &= np.nan_to_num(g, nan=0.0) > 0
        if sel.sum() < 2:
            return None
        slope, intercept = np.polyfit(d_grid[sel], np.log2(g[sel]), 1)
        return -slope, intercept

    total_errors = counts.max(initial=0)
    if total_errors == 0:
        return ReliabilityReport(
            delays=d_grid, g_hat=np.nan_to_num(g_hat, nan=0.0),
            g_hat_monotone=np.nan_to_num(g_mono, nan=0.0),
            ci_lo=ci_lo, ci_hi=ci_hi, counts=counts, n_samples=n_samples,
            alpha=np.inf, log2_k=-np.inf, unbounded=True,
        )
    fitted = fit(g_hat)
    alpha, log2_k = fitted if fitted else (np.nan, np.nan)

    alpha_ci = None
    if bootstrap > 0 and fitted:
        gen = np.random.Generator(np.random.Philox(key=seed))
        n_trials = len(tables)
        alphas = []
        for _ in range(bootstrap):
            pick = gen.integers(0, n_trials, size=n_trials)
            d_b = np.concatenate([delays_per_trial[i] for i in pick])
            t_b = np.concatenate([times_per_trial[i] for i in pick])
            _, _, g_b = curve(d_b, t_b)
            f = fit(g_b)
            if f:
                alphas.append(f[0])
        if len(alphas) >= max(10, bootstrap // 2):
            alpha_ci = (
                float(np.percentile(alphas, 100 * (1 - conf) / 2)),
                float(np.percentile(alphas, 100 * (1 + conf) / 2)),
            )

    return ReliabilityReport(
        delays=d_grid, g_hat=np.nan_to_num(g_hat, nan=0.0),
        g_hat_monotone=np.nan_to_num(g_mono, nan=0.0),
        ci_lo=ci_lo, ci_hi=ci_hi, counts=counts, n_samples=n_samples,
        alpha=float(alpha), log2_k=float(log2_k), alpha_ci=alpha_ci,
    )
