"""Monte Carlo moment and tail estimators with divergence trend tests.

Everything here is estimator-side plumbing: empirical frequencies and
means over trial-indexed trajectory arrays, Clopper-Pearson / bootstrap
intervals, Mann-Kendall trend verdicts, and log-log slope fits for
power-law tails.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

__all__ = [
    "estimate_moment",
    "estimate_tail",
    "mann_kendall",
    "MomentEstimate",
    "TailEstimate",
    "tail_from_reliability",
]


def mann_kendall(series: np.ndarray) -> tuple:
    """Mann-Kendall S statistic and its normal z-score (no-trend null)."""
    y = np.asarray(series, dtype=float)
    n = len(y)
    if n < 3:
        return 0, 0.0
    s = 0
    for i in range(n - 1):
        s += int(np.sign(y[i + 1:] - y[i]).sum())
    var = n * (n - 1) * (2 * n + 5) / 18.0
    if s > 0:
        z = (s - 1) / np.sqrt(var)
    elif s < 0:
        z = (s + 1) / np.sqrt(var)
    else:
        z = 0.0
    return s, float(z)


@dataclass
class MomentEstimate:
    eta: float
    per_t: np.ndarray           # E[|X_t|**eta] estimates
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    verdict: str                # bounded | diverging | inconclusive
    mk_z: float
    n_trials: int

    @property
    def final(self) -> float:
        return float(self.per_t[-1])


def estimate_moment(trajectories: np.ndarray, eta: float, n_boot: int = 200,
                    trend_window=None, z_threshold: float = 3.0,
                    growth_gate: float = 1.25, seed: int = 0) -> MomentEstimate:
    """Per-time eta-moment with bootstrap CIs and a trend verdict.

    The verdict applies Mann-Kendall to the per-t series over
    ``trend_window`` (index pair; default the late half) with significance
    calibrated by bootstrapping trials (per-t estimates share trials, so
    the textbook MK variance is optimistic).  "diverging" also requires
    the second window half to exceed the first by ``growth_gate``: a
    statistically detectable but vanishing residual drift toward a plateau
    stays "bounded".  Fewer than 30 trials is inconclusive.

    Heavy-tailed divergences are only resolvable while the tail events are
    actually sampled; pick ``trend_window`` accordingly (for the erasure
    counterexample that is t <= log_{1/delta}(trials), after which the
    empirical mean of a diverging moment plateaus).
    """
    x = np.abs(np.asarray(trajectories, dtype=float))
    if x.ndim != 2 or x.size == 0:
        raise ValueError("trajectories must be a nonempty (trials, time) array")
    n, T = x.shape
    m = x**eta
    per_t = m.mean(axis=0)
    gen = np.random.Generator(np.random.Philox(key=seed))
    boots = np.empty((n_boot, T))
    for bdx in range(n_boot):
        pick = gen.integers(0, n, size=n)
        boots[bdx] = m[pick].mean(axis=0)
    ci_lo = np.percentile(boots, 2.5, axis=0)
    ci_hi = np.percentile(boots, 97.5, axis=0)

    if trend_window is None:
        trend_window = (T // 2, T)
    a, b = int(trend_window[0]), int(trend_window[1])
    a, b = max(0, a), min(T, b)
    win = per_t[a:b]
    _, z = mann_kendall(win)
    z_boot = np.array([mann_kendall(boots[bdx, a:b])[1]
                       for bdx in range(min(n_boot, 64))])
    spread = max(1.0, float(np.std(z_boot - z)) if len(z_boot) > 3 else 1.0)
    z_eff = z / spread
    mid = len(win) // 2
    first = float(np.mean(win[:mid])) if mid else 0.0
    second = float(np.mean(win[mid:])) if mid else 0.0
    growing = first > 0 and second / first > growth_gate
    if n < 30 or len(win) < 4:
        verdict = "inconclusive"
    elif z_eff > z_threshold and growing:
        verdict = "diverging"
    else:
        verdict = "bounded"
    return MomentEstimate(eta=eta, per_t=per_t, ci_lo=ci_lo, ci_hi=ci_hi,
                          verdict=verdict, mk_z=float(z), n_trials=n)


@dataclass
class TailEstimate:
    m_grid: np.ndarray
    per_t: np.ndarray            # (time, m) empirical P(|X_t| > m)
    pooled: np.ndarray           # late-horizon pooled tail per m
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    slope: float                 # log-log slope of the pooled tail
    slope_ci: Optional[tuple]
    n_late_samples: int


def estimate_tail(trajectories: np.ndarray, m_grid, late_window: float = 0.5,
                  n_boot: int = 200, fit_min_count: int = 10,
                  seed: int = 0) -> TailEstimate:
    """Tail frequency surface plus a late-horizon log-log slope fit.

    The slope is fit over grid points with at least ``fit_min_count``
    exceedances; its CI is a percentile bootstrap over trials.
    """
    x = np.abs(np.asarray(trajectories, dtype=float))
    m_grid = np.asarray(sorted(m_grid), dtype=float)
    if (m_grid <= 0).any() or len(m_grid) < 2:
        raise ValueError("m grid must be positive and increasing")
    n, T = x.shape
    per_t = (x[:, :, None] > m_grid[None, None, :]).mean(axis=0)
    start = int(T * (1 - late_window))
    late = x[:, start:]

    def pooled_tail(sample):
        return (sample[:, :, None] > m_grid[None, None, :]).mean(axis=(0, 1))

    pooled = pooled_tail(late)
    counts = pooled * late.size

    def fit_slope(p):
        sel = p * late.size >= fit_min_count
        sel &= p > 0
        if sel.sum() < 2:
            return np.nan
        return float(np.polyfit(np.log2(m_grid[sel]), np.log2(p[sel]), 1)[0])

    slope = fit_slope(pooled)
    gen = np.random.Generator(np.random.Philox(key=seed))
    slopes = []
    for _ in range(n_boot):
        pick = gen.integers(0, n, size=n)
        s = fit_slope(pooled_tail(late[pick]))
        if np.isfinite(s):
            slopes.append(s)
    slope_ci = None
    if len(slopes) >= max(10, n_boot // 2):
        slope_ci = (float(np.percentile(slopes, 2.5)),
                    float(np.percentile(slopes, 97.5)))
    # Clopper-Pearson on the pooled tail counts.
    k = counts
    ntot = late.size
    a = 0.025
    ci_lo = np.where(k > 0, stats.beta.ppf(a, k, ntot - k + 1), 0.0)
    ci_hi = np.where(k < ntot, stats.beta.ppf(1 - a, k + 1, ntot - k), 1.0)
    return TailEstimate(m_grid=m_grid, per_t=per_t, pooled=pooled,
                        ci_lo=ci_lo, ci_hi=ci_hi, slope=slope,
                        slope_ci=slope_ci, n_late_samples=int(ntot))


def tail_from_reliability(g_of_d, k_const: float, lam: float):
    """Map an error-vs-delay curve to a state-tail bound
    P(|X| > m) <= g(K + log_lam(m)): the round trip between anytime
    reliability and achievable stability."""

    def f(m):
        if m <= 0:
            return 1.0
        return g_of_d(k_const + np.log(m) / np.log(lam))

    return f
