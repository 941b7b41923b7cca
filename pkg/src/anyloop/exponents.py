"""Random-coding error exponent and capacity for discrete memoryless channels.

Everything is in base 2 (bits).  ``E0(rho, Q)`` is concave in Q for fixed
rho and ``E0(rho) - rho * R`` is concave in rho, so the maximization nests a
ternary search over rho around a projected-gradient ascent over the input
distribution.
"""

from dataclasses import dataclass

import numpy as np

from anyloop.channels import DmcSpec

__all__ = ["random_coding_exponent", "gallager_e0", "dmc_capacity", "ExponentResult"]

_LOG2 = np.log(2.0)


def gallager_e0(spec: DmcSpec, rho: float, q: np.ndarray) -> float:
    """E0(rho, Q) = -log2 sum_b ( sum_a Q(a) p(b|a)^(1/(1+rho)) )^(1+rho)."""
    beta = spec.matrix ** (1.0 / (1.0 + rho))
    inner = q @ beta
    return -np.log2(np.sum(inner ** (1.0 + rho)))


def _e0_gradient(spec: DmcSpec, rho: float, q: np.ndarray) -> np.ndarray:
    beta = spec.matrix ** (1.0 / (1.0 + rho))
    inner = q @ beta
    f = np.sum(inner ** (1.0 + rho))
    df = (1.0 + rho) * (beta @ inner**rho)
    return -df / (f * _LOG2)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, len(v) + 1)
    cond = u - (css - 1.0) / idx > 0
    k = idx[cond][-1]
    tau = (css[k - 1] - 1.0) / k
    return np.maximum(v - tau, 0.0)


def _maximize_e0_over_q(spec: DmcSpec, rho: float, tol: float = 1e-9,
                        max_iter: int = 5000):
    """Projected-gradient ascent on the concave E0(rho, .)."""
    n = spec.input_alphabet_size
    q = np.full(n, 1.0 / n)
    val = gallager_e0(spec, rho, q)
    grad = _e0_gradient(spec, rho, q)
    # Uniform input is optimal for symmetric channels; detect it via the
    # KKT condition (gradient equal across the support) and return early.
    if np.ptp(grad) < 1e-12:
        return val, q
    step = 1.0
    for _ in range(max_iter):
        cand = _project_simplex(q + step * grad)
        cand_val = gallager_e0(spec, rho, cand)
        if cand_val < val - 1e-15:
            step *= 0.5
            if step < 1e-14:
                break
            continue
        moved = np.abs(cand - q).max()
        gain = cand_val - val
        q, val = cand, cand_val
        grad = _e0_gradient(spec, rho, q)
        step = min(step * 2.0, 1e6)
        if gain < tol * 1e-3 and moved < tol:
            break
    return val, q


@dataclass(frozen=True)
class ExponentResult:
    value: float
    rho: float
    q: np.ndarray


def random_coding_exponent(spec: DmcSpec, rate: float, tol: float = 1e-9) -> ExponentResult:
    """max over rho in [0,1] and input distribution Q of E0(rho, Q) - rho*R.

    Returns the exponent together with the maximizing (rho, Q); Q is what a
    random-label construction should draw its labels from.  Rates at or
    above capacity give a zero exponent.
    """
    if rate < 0:
        raise ValueError("rate must be >= 0")
    if rate > np.log2(spec.input_alphabet_size):
        raise ValueError("rate exceeds log2 of the input alphabet size")

    def objective(rho):
        val, q = _maximize_e0_over_q(spec, rho, tol=tol)
        return val - rho * rate, q

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if objective(m1)[0] < objective(m2)[0]:
            lo = m1
        else:
            hi = m2
    rho = 0.5 * (lo + hi)
    best_val, best_q = objective(rho)
    # Concave objective can still peak at an endpoint; check both.
    for endpoint in (0.0, 1.0):
        v, q = objective(endpoint)
        if v > best_val:
            best_val, best_q, rho = v, q, endpoint
    return ExponentResult(value=max(best_val, 0.0), rho=rho, q=best_q)


def dmc_capacity(spec: DmcSpec, tol: float = 1e-12, max_iter: int = 20000) -> float:
    """Shannon capacity in bits/use via Blahut-Arimoto."""
    p = spec.matrix
    n = spec.input_alphabet_size
    q = np.full(n, 1.0 / n)
    mask = p > 0
    logp = np.where(mask, np.log(np.where(mask, p, 1.0)), 0.0)
    for _ in range(max_iter):
        r = q @ p
        with np.errstate(divide="ignore"):
            logr = np.where(r > 0, np.log(r), 0.0)
        d = np.sum(np.where(mask, p * (logp - logr), 0.0), axis=1)
        w = q * np.exp(d)
        q_next = w / w.sum()
        if np.abs(q_next - q).max() < tol:
            q = q_next
            break
        q = q_next
    r = q @ p
    with np.errstate(divide="ignore"):
        logr = np.where(r > 0, np.log(r), 0.0)
    mi = np.sum(q @ np.where(mask, p * (logp - logr), 0.0))
    return float(mi / _LOG2)
