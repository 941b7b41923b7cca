"""Built-in experiments and the Monte Carlo scenario runner.

``run_scenario`` turns a validated config into raw CSV logs plus a
StabilityReport (and a ReliabilityReport where the scheme carries an
anytime code).  Every draw derives from the config seed through named
streams, so identical configs produce identical artifact bytes.
"""

from dataclasses import dataclass, field
from fractions import Fraction
import math
import os
from typing import Optional

import numpy as np

from anyloop import rng as rngmod
from anyloop.channels import ErasureSpec, DmcSpec
from anyloop.config import merge_defaults, validate
from anyloop.estimators import TailEstimate, estimate_moment, estimate_tail
from anyloop.exponents import random_coding_exponent
from anyloop.io import write_csv
from anyloop.plant import PlantParams, example1_batch
from anyloop.reliability import estimate_reliability
from anyloop.stabilizer import closed_loop_run
from anyloop.lattice import minimal_block_length, run_trellis_loop
from anyloop.dance import run_dance_loop, validate_output_tail, erasure_output_index
from anyloop.awgn import awgn_choose_params, awgn_anytime_run

__all__ = ["ScenarioConfig", "StabilityReport", "run_scenario",
           "reset_second_moment_series"]


@dataclass
class ScenarioConfig:
    """Thin typed wrapper over the JSON config tree."""

    scheme: str
    seed: int = 0
    horizon: int = 100
    trials: int = 100
    plant: dict = field(default_factory=lambda: {"lam": 1.5, "omega": 1.0, "x0": 0.0})
    channel: dict = field(default_factory=dict)
    scheme_params: dict = field(default_factory=dict)
    estimators: dict = field(default_factory=dict)
    output_dir: Optional[str] = None
    raw_log_limit: int = 2_000_000

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = merge_defaults(d)
        errs = validate(d)
        if errs:
            raise ValueError("invalid config: " + "; ".join(errs))
        return cls(**{k: d[k] for k in (
            "scheme", "seed", "horizon", "trials", "plant", "channel",
            "scheme_params", "estimators", "output_dir", "raw_log_limit")})

    def plant_params(self) -> PlantParams:
        return PlantParams(lam=self.plant["lam"], omega=self.plant["omega"],
                           x0=self.plant.get("x0", 0.0))


@dataclass
class StabilityReport:
    """Measured stability: tail surface, moments, and trend verdicts."""

    tails: Optional[TailEstimate]
    moments: list  # of MomentEstimate
    sup_abs_state: float
    extras: dict = field(default_factory=dict)

    def verdict(self, eta: float) -> str:
        for m in self.moments:
            if m.eta == eta:
                return m.verdict
        raise KeyError(f"no moment estimate for eta={eta}")


def reset_second_moment_series(lam: float, delta: float, sigma2: float,
                               t: int) -> float:
    """Lower bound on E[X_t**2] under the reset strategy over a real
    erasure channel: sum over the geometric time-since-last-reset of the
    accumulated disturbance power (the never-reset term is dropped, hence
    a strict lower bound)."""
    if t < 1:
        return 0.0
    i = np.arange(0, t)  # time since reset for X_t: 0..t-1
    weights = (1 - delta) * delta**i
    growth = (lam ** (2 * (i + 1)) - 1) / (lam**2 - 1)
    return float(sigma2 * np.sum(weights * growth))


def _stability_from_states(states: np.ndarray, est_cfg: dict, seed: int) -> StabilityReport:
    m_grid = est_cfg.get("m_grid") or [0.5, 1, 2, 4, 8, 16, 32]
    eta_grid = est_cfg.get("eta_grid") or [1.0, 2.0]
    tails = estimate_tail(states, m_grid, seed=seed)
    moments = [estimate_moment(states, eta, seed=seed) for eta in eta_grid]
    return StabilityReport(tails=tails, moments=moments,
                           sup_abs_state=float(np.abs(states).max()))


def _write_stability(outdir: str, rep: StabilityReport, states: np.ndarray,
                     raw_limit: int):
    if rep.tails is not None:
        tt = rep.tails
        step = max(1, tt.per_t.shape[0] // 64)
        rows = []
        for t in range(0, tt.per_t.shape[0], step):
            for mi, m in enumerate(tt.m_grid):
                rows.append((t, float(m), float(tt.per_t[t, mi]), 0.0, 0.0))
        write_csv(os.path.join(outdir, "tails.csv"), "tails", rows)
        write_csv(
            os.path.join(outdir, "tails_pooled.csv"), "tails_pooled",
            [(float(m), float(p), float(lo), float(hi))
             for m, p, lo, hi in zip(tt.m_grid, tt.pooled, tt.ci_lo, tt.ci_hi)],
        )
    mrows, vrows = [], []
    for me in rep.moments:
        step = max(1, len(me.per_t) // 256)
        for t in range(0, len(me.per_t), step):
            mrows.append((float(me.eta), t, float(me.per_t[t]),
                          float(me.ci_lo[t]), float(me.ci_hi[t])))
        vrows.append((float(me.eta), me.verdict, float(me.mk_z), float(me.final)))
    write_csv(os.path.join(outdir, "moments.csv"), "moments", mrows)
    write_csv(os.path.join(outdir, "moment_verdicts.csv"), "moment_verdicts", vrows)
    if states.size <= raw_limit:
        rows = ((i, t, float(states[i, t]))
                for i in range(states.shape[0]) for t in range(states.shape[1]))
        write_csv(os.path.join(outdir, "states.csv"), "states", rows)


def _write_reliability(outdir: str, report, name: str = "reliability.csv"):
    rows = [(float(d), float(g), float(lo), float(hi))
            for d, g, lo, hi in zip(report.delays, report.g_hat,
                                    report.ci_lo, report.ci_hi)]
    write_csv(os.path.join(outdir, name), "reliability", rows)


def _write_tables(outdir: str, tables, d_grid, raw_limit: int):
    rows = []
    for trial, tb in enumerate(tables):
        for tau, delay in zip(tb.times, tb.error_delays):
            for d in d_grid:
                rows.append((trial, int(tau), int(d), int(delay >= d)))
        if len(rows) > raw_limit:
            return
    write_csv(os.path.join(outdir, "estimate_table.csv"), "estimate_table", rows)


# ---------------------------------------------------------------------------
# Scheme runners
# ---------------------------------------------------------------------------


def _run_example1(cfg: ScenarioConfig) -> dict:
    p = cfg.plant_params()
    states = example1_batch(cfg.trials, cfg.horizon, cfg.seed,
                            lam=p.lam, omega=p.omega,
                            adversarial=cfg.scheme_params.get("adversarial", True))
    rep = _stability_from_states(states, cfg.estimators, cfg.seed)
    rep.extras["bound"] = 2.0
    return {"states": states, "stability": rep,
            "summary": {"sup_abs_state": rep.sup_abs_state,
                        "bound_holds": rep.sup_abs_state <= 2.0}}


def _run_erasure_reset(cfg: ScenarioConfig) -> dict:
    p = cfg.plant_params()
    delta = cfg.channel.get("delta", 0.5)
    gen = rngmod.stream(cfg.seed, 0, "erasure-reset")
    half = p.omega / 2
    x = np.zeros(cfg.trials)
    states = np.zeros((cfg.trials, cfg.horizon + 1))
    for t in range(cfg.horizon):
        erased = gen.random(cfg.trials) < delta
        w = gen.uniform(-half, half, cfg.trials)
        x = np.where(erased, p.lam * x, 0.0) + w
        states[:, t + 1] = x
    # The diverging moment rides erasure runs of probability delta**t: the
    # empirical mean resolves the truth only through t ~ log_{1/delta}(N).
    # Beyond that the estimate is censored, so both the trend test and the
    # lower-bound-series comparison are evaluated on the resolvable window;
    # its lower edge skips the transient every bounded moment also shows,
    # and Mann-Kendall needs at least 8 points to reach 3 sigma at all.
    t_resolve = int(math.log(cfg.trials) / math.log(1.0 / delta)) - 2
    t_resolve = max(6, min(cfg.horizon, t_resolve))
    lo = max(1, min(t_resolve // 3, t_resolve - 8))
    window = (lo, t_resolve)
    m_grid = cfg.estimators.get("m_grid") or [0.5, 1, 2, 4, 8, 16, 32]
    eta_grid = cfg.estimators.get("eta_grid") or [1.0, 2.0]
    tails = estimate_tail(states, m_grid, seed=cfg.seed)
    moments = [estimate_moment(states, eta, trend_window=window, seed=cfg.seed)
               for eta in eta_grid]
    rep = StabilityReport(tails=tails, moments=moments,
                          sup_abs_state=float(np.abs(states).max()))
    sigma2 = p.omega**2 / 12.0
    series = [reset_second_moment_series(p.lam, delta, sigma2, t)
              for t in range(cfg.horizon + 1)]
    rep.extras["second_moment_lower_series"] = series
    rep.extras["resolvable_window"] = window
    second = next((m for m in rep.moments if m.eta == 2.0), None)
    first = next((m for m in rep.moments if m.eta == 1.0), None)
    exceeded = None
    if second is not None:
        sl = np.asarray(series[window[0]:window[1]])
        exceeded = bool(np.all(second.ci_hi[window[0]:window[1]] >= sl))
    return {"states": states, "stability": rep, "summary": {
        "second_moment_verdict": second.verdict if second else None,
        "first_moment_verdict": first.verdict if first else None,
        "series_exceeded": exceeded,
        "resolvable_t_max": t_resolve,
    }}


def _sharded_loop_run(cfg: ScenarioConfig, kwargs: dict):
    """Shard trials across ANYLOOP_WORKERS processes; merge by trial index.

    Per-trial RNG streams are keyed by absolute trial index, so any shard
    layout reproduces the single-process run bitwise.
    """
    workers = int(os.environ.get("ANYLOOP_WORKERS", "1"))
    if workers <= 1 or cfg.trials < 2 * workers:
        return closed_loop_run(trials=cfg.trials, trial_offset=0, **kwargs)
    import multiprocessing as mp

    bounds = np.linspace(0, cfg.trials, workers + 1).astype(int)
    jobs = [dict(kwargs, trials=int(b - a), trial_offset=int(a))
            for a, b in zip(bounds, bounds[1:]) if b > a]
    with mp.get_context("fork").Pool(workers) as pool:
        parts = pool.map(_loop_shard, jobs)
    from anyloop.stabilizer import LoopResult
    return LoopResult(
        states=np.concatenate([r.states for r in parts]),
        depths=np.concatenate([r.depths for r in parts]),
        tables=[t for r in parts for t in r.tables],
        width_sup=max(r.width_sup for r in parts),
        bound_constant=max(r.bound_constant for r in parts),
    )


def _loop_shard(kwargs):
    return closed_loop_run(**kwargs)


def _run_feedback_sufficiency(cfg: ScenarioConfig) -> dict:
    p = cfg.plant_params()
    sp = cfg.scheme_params
    res = _sharded_loop_run(cfg, dict(
        plant_params=p,
        erasure_delta=cfg.channel.get("delta", 0.2),
        rate=sp.get("rate", "7/10"),
        bits_per_packet=cfg.channel.get("bits", 1),
        horizon=cfg.horizon, seed=cfg.seed,
        v=sp.get("v", 0), exact=sp.get("exact", False),
        delta=sp.get("delta"),
        disturbance=sp.get("disturbance", "iid-uniform"),
        gamma_ctrl=sp.get("gamma_ctrl", 0.0),
    ))
    rep = _stability_from_states(res.states, cfg.estimators, cfg.seed)
    x = np.abs(res.states)
    bound = res.pathwise_bound(p.lam)
    rel = estimate_reliability(res.tables, bootstrap=sp.get("bootstrap", 0),
                               fit_window=cfg.estimators.get("delay_window"),
                               seed=cfg.seed)
    rep.extras["width_sup"] = res.width_sup
    return {"states": res.states, "stability": rep, "reliability": rel,
            "tables": res.tables, "result": res, "summary": {
                "pathwise_bound_violations": int((x > bound).sum()),
                "alpha_hat": rel.alpha,
                "tail_slope": rep.tails.slope if rep.tails else None,
            }}


def _run_trellis(cfg: ScenarioConfig) -> dict:
    p = cfg.plant_params()
    sp = cfg.scheme_params
    if cfg.channel.get("matrix_csv"):
        ch = DmcSpec.from_csv(cfg.channel["matrix_csv"])
    else:
        ch = DmcSpec.from_matrix(cfg.channel["matrix"])
    rate = sp.get("rate", 0.4)
    er = random_coding_exponent(ch, rate)
    delta_q = sp.get("delta", 20.0)
    gamma = sp.get("gamma", 0.0)
    n = sp.get("n") or minimal_block_length(p.lam, rate, delta_q, p.omega)
    eta = sp.get("eta", 1.0)
    if er.value <= eta * math.log2(p.lam):
        raise ValueError(
            f"E_r(R)={er.value:.4f} <= eta*log2(lam)="
            f"{eta * math.log2(p.lam):.4f}: the moment bound does not apply"
        )
    res = run_trellis_loop(ch, er.q, p.lam, p.omega, delta_q, gamma, n,
                           cfg.horizon, cfg.trials, seed=cfg.seed,
                           max_states=sp.get("max_states", 64),
                           rate_check=rate)
    rep = _stability_from_states(res.block_states, cfg.estimators, cfg.seed)
    depths = res.depths
    d_max = int(depths.max(initial=0))
    depth_counts = np.bincount(depths.ravel(), minlength=d_max + 1)
    rep.extras["exponent"] = er.value
    return {"states": res.block_states, "stability": rep, "result": res,
            "summary": {
                "exponent": er.value, "n": n,
                "depth_counts": depth_counts.tolist(),
                "bound_violations": res.bound_violations,
                "guard_hits": res.n_guard_hits,
            }}


def _run_dance(cfg: ScenarioConfig) -> dict:
    sp = cfg.scheme_params
    bits = cfg.channel.get("bits", 2)
    delta_c = cfg.channel.get("delta", 0.25)
    # Output-tail precondition: finite alphabets always pass for beta > eta.
    spec = ErasureSpec(delta=delta_c, kind="packet", bits=bits)
    idx_probs = {}
    for v in range(2**bits):
        idx_probs[erasure_output_index(v, bits)] = 1 - delta_c
    idx_probs[0] = delta_c
    eta = sp.get("eta", 1.0)
    beta = sp.get("beta", eta + 1.0)
    k_tail = sp.get("k_tail", 2.0 ** (bits + 1))
    if not validate_output_tail(idx_probs, k_tail, beta, eta):
        raise ValueError(
            "channel output tail fails P(|B| >= i) <= K i**-beta with "
            "beta > eta; the dance construction's precondition is violated"
        )
    plant_lam = cfg.plant.get("lam", 2.0)
    if float(plant_lam) != int(plant_lam) or int(plant_lam) < 2:
        raise ValueError(
            "scheme dance: plant.lam must be an integer >= 2 (exact "
            "long-horizon arithmetic needs an integer gain)"
        )
    kwargs = dict(
        lam=int(plant_lam),
        omega=Fraction(str(sp.get("omega", cfg.plant.get("omega", 0.25)))),
        gamma=Fraction(str(sp.get("gamma", "1/4"))),
        delta=Fraction(str(sp.get("delta", "1"))),
        n=sp.get("n", 8), erasure_delta=delta_c, packet_bits=bits,
    )
    keep_res = cfg.horizon <= cfg.raw_log_limit
    r_dance = run_dance_loop(cfg.horizon, cfg.seed, keep_residuals=keep_res,
                             **kwargs)
    r_twin = run_dance_loop(cfg.horizon, cfg.seed, explicit_feedback=True, **kwargs)
    return {"dance": r_dance, "twin": r_twin, "summary": {
        "decode_errors": r_dance.n_decode_errors,
        "n_decodes": r_dance.n_decodes,
        "symbols_identical": r_dance.true_symbols == r_twin.true_symbols,
        "max_abs_state": r_dance.max_abs_state,
    }}


def _run_awgn(cfg: ScenarioConfig) -> dict:
    sp = cfg.scheme_params
    params = awgn_choose_params(sp.get("rate", 0.9),
                                cfg.channel.get("power_limit", 7.0),
                                cfg.channel.get("noise_power", 1.0))
    res = awgn_anytime_run(params, cfg.horizon, cfg.trials, seed=cfg.seed)
    return {"awgn": res, "params": params, "reliability": res.report, "summary": {
        "mean_input_power": res.mean_input_power,
        "power_limit": params.power,
        "min_error_delay": res.min_delay_with_error,
        "max_error_delay": res.max_delay_with_error,
    }}


def _run_passive_observer(cfg: ScenarioConfig) -> dict:
    p = cfg.plant_params()
    states = example1_batch(cfg.trials, cfg.horizon, cfg.seed,
                            lam=p.lam, omega=p.omega, adversarial=False)
    delta = cfg.channel.get("delta", 0.5)
    gen = rngmod.stream(cfg.seed, 0, "passive-erasure")
    erased = gen.random(states.shape) < delta
    xhat = np.where(erased, 0.0, states)  # estimator: output itself, 0 on erasure
    err2 = float(np.mean((xhat - states) ** 2))
    k_est = float(np.mean(states**2).max())
    second_moment = float((states**2).mean())
    return {"states": states, "summary": {
        "passive_mse": err2,
        "closed_loop_second_moment": second_moment,
        "mse_leq_half_k": err2 <= 0.5 * 4.0,  # K = 4 from the sup bound |X| <= 2
    }}


_RUNNERS = {
    "example1": _run_example1,
    "erasure-reset": _run_erasure_reset,
    "feedback-sufficiency": _run_feedback_sufficiency,
    "nofeedback-trellis": _run_trellis,
    "dance": _run_dance,
    "awgn": _run_awgn,
    "passive-observer": _run_passive_observer,
}


def run_scenario(cfg, write: bool = True) -> dict:
    """Run one scenario; returns the in-memory results and summary.

    ``cfg`` is a ScenarioConfig or a raw dict (validated here).  With an
    output_dir configured, fixed-schema CSV artifacts are written;
    summaries are always recomputable from them.
    """
    if isinstance(cfg, dict):
        cfg = ScenarioConfig.from_dict(cfg)
    out = _RUNNERS[cfg.scheme](cfg)
    if write and cfg.output_dir:
        od = cfg.output_dir
        os.makedirs(od, exist_ok=True)
        if "stability" in out:
            _write_stability(od, out["stability"], out["states"], cfg.raw_log_limit)
        if "reliability" in out:
            _write_reliability(od, out["reliability"])
        if "tables" in out:
            d_grid = cfg.estimators.get("delay_window")
            grid = range(0, 21) if not d_grid else range(int(d_grid[0]), int(d_grid[1]) + 1)
            _write_tables(od, out["tables"], grid, cfg.raw_log_limit)
        if "result" in out and hasattr(out["result"], "true_bins"):
            res = out["result"]
            rows = []
            for i in range(res.true_bins.shape[0]):
                for k in range(res.true_bins.shape[1]):
                    rows.append((i, k, int(res.true_bins[i, k]),
                                 int(res.ml_bins[i, k]), int(res.depths[i, k])))
            write_csv(os.path.join(od, "trellis.csv"), "trellis", rows)
        if "dance" in out:
            r = out["dance"]
            res_col = r.residuals or [0.0] * len(r.decoded_outputs)
            rows = [(t, bt, bd, rs) for t, (bt, bd, rs) in
                    enumerate(zip(r.true_outputs, r.decoded_outputs, res_col))]
            if len(rows) <= cfg.raw_log_limit:
                write_csv(os.path.join(od, "dance.csv"), "dance", rows)
        write_csv(os.path.join(od, "summary.csv"), "summary",
                  sorted((k, repr(v)) for k, v in out["summary"].items()))
    return out
