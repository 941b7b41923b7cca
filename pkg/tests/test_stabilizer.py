from fractions import Fraction

import numpy as np
import pytest

from anyloop.plant import PlantParams
from anyloop.stabilizer import (
    VirtualObserverState,
    WidthSchedule,
    closed_loop_run,
    float_horizon_limit,
    make_feedback_pair,
    min_window,
    observer_emit,
    overlapping_bin_quantize,
    required_rate,
    solve_width_cycle,
)
from anyloop import rng as rngmod


def test_min_window_example():
    # lam=1.5, R=1, omega=1 -> omega / (1 - lam/2) = 4
    assert min_window(1.5, 1.0, 1) == pytest.approx(4.0)


def test_min_window_rejects_low_rate():
    with pytest.raises(ValueError):
        min_window(1.5, 1.0, 0.5)


def test_delta_below_minimum_rejected():
    with pytest.raises(ValueError):
        VirtualObserverState(1.5, 1.0, 1, delta=3.9)
    VirtualObserverState(1.5, 1.0, 1, delta=4.0)  # boundary accepted


def test_zero_disturbance_symmetric_orbit():
    # With a zero disturbance budget the window is degenerate and the
    # virtual state sits at the fixed point with a constant symbol stream.
    obs = VirtualObserverState(1.5, 0.0, 1)
    cells = []
    for _ in range(50):
        cell, r = obs.emit()
        cells.append(cell)
        obs.absorb(0.0)
        assert obs.xbar == 0.0
    assert len(set(cells)) == 1
    # With a positive budget but zero realized disturbance, the state only
    # rattles inside the (budgeted) window.
    obs2 = VirtualObserverState(1.5, 1.0, 1)
    for _ in range(200):
        obs2.emit()
        obs2.absorb(0.0)
        assert abs(obs2.xbar) <= obs2.width / 2


def test_width_cycle_is_stationary_and_valid():
    lam, omega, rate = Fraction(2), Fraction(1), Fraction(5, 4)
    cyc = solve_width_cycle(lam, omega, rate)
    sched = WidthSchedule(lam, omega, rate, kind="cycle", exact=True)
    for t in range(40):
        w, w_next = sched.of(t), sched.of(t + 1)
        r = sched.bits(t)
        assert lam * w / 2**r + omega == w_next  # exact induction equality
    assert sched.of(0) == cyc[0] and sched.of(len(cyc)) == cyc[0]


def test_window_containment_adversarial_100k_steps():
    # Exact arithmetic, adversarial bang-bang disturbance pushing xbar
    # toward the window edge: containment must hold exactly at every step.
    obs = VirtualObserverState(2, 1, Fraction(5, 4), exact=True,
                               schedule=WidthSchedule(2, 1, Fraction(5, 4),
                                                      kind="cycle", exact=True))
    half = Fraction(1, 2)
    gen = rngmod.stream(0, 0, "adversarial")
    for t in range(100_000):
        obs.emit()
        w = half if obs.xbar >= 0 else -half
        if gen.random() < 0.3:
            w = -w
        obs.absorb(w)  # raises on violation
        assert abs(obs.xbar) <= obs.width / 2


def test_observer_emit_functional_form():
    obs = VirtualObserverState(1.5, 1.0, 1)
    cell, r, obs = observer_emit(0.0, obs)
    assert r == 1 and cell in (0, 1)
    obs.absorb(0.25)


def test_overlapping_bins_reduce_to_partition_when_noiseless():
    delta = 4.0
    xs = np.linspace(-10, 10, 401)
    for x in xs:
        j = overlapping_bin_quantize(x, delta, 0.0)
        lo, hi = delta * j / 2, delta * j / 2 + delta
        assert lo < x <= hi or (x == lo and j == j)


def test_overlapping_bins_contain_truth_on_boundary_grid():
    # x near a partition boundary, any |noise| < gamma/2: the doubled bins
    # still contain the true state.
    delta, gamma = 4.0, 1.0
    for x in np.linspace(-6, 6, 97):
        for n in np.linspace(-gamma / 2 + 1e-9, gamma / 2 - 1e-9, 11):
            j = overlapping_bin_quantize(x + n, delta, gamma)
            lo, hi = delta * j / 2, delta * j / 2 + delta
            assert lo < x <= hi


def test_overlapping_bins_need_margin():
    with pytest.raises(ValueError):
        overlapping_bin_quantize(0.3, 1.0, 0.5)


def test_required_rate_formula():
    assert required_rate(4, 1.5) == pytest.approx(0.25 + np.log2(1.5))
    assert required_rate(1, 2.0) == pytest.approx(2.0)


def test_tracking_identity_error_free():
    # Noiseless channel (delta=0): estimates are always correct, so the
    # true state must equal the virtual state exactly (exact arithmetic).
    p = PlantParams(lam=2.0, omega=1.0)
    res = closed_loop_run(p, erasure_delta=0.0, rate="5/4", bits_per_packet=2,
                          horizon=120, trials=2, seed=1, exact=True)
    assert res.depths.max() == 0
    # with zero depth the pathwise bound collapses to the window constant
    assert np.abs(res.states).max() <= res.bound_constant


def test_internal_model_from_scratch_consistency():
    # The closed-form incremental control equals the全-history recomputation.
    obs_f, ctl_f = make_feedback_pair(Fraction(3, 2), Fraction(1), "7/10", 1,
                                      exact=True, track_absolute=True)
    from anyloop.channels import ChannelSession, ErasureSpec, channel_step
    session = ChannelSession(ErasureSpec(delta=0.3, kind="packet", bits=1),
                             seed=4, feedback_mode="noiseless-unit-delay")
    O, C = obs_f(), ctl_f()
    gen = rngmod.stream(4, 0, "w")
    x = Fraction(0)
    lam = Fraction(3, 2)
    for t in range(60):
        a = O(t, x, session.outputs, t)
        b = channel_step(session, a)
        u = C(t, b)
        # After acting, the control-driven model must equal the estimated
        # target recomputed from the whole history (exactly, in exact mode).
        scratch = C.models.target_from_scratch(t, C.models._prev_view)
        assert scratch == C.models.xtilde
        w = (Fraction(int(gen.integers(0, 2**20 + 1)), 2**21) - Fraction(1, 4)) * 2
        x = lam * x + u + w


def test_pathwise_bound_v0_and_v3_float():
    p = PlantParams(lam=1.5, omega=1.0)
    for v in (0, 3):
        res = closed_loop_run(p, erasure_delta=0.2, rate="7/10",
                              bits_per_packet=1, horizon=60, trials=60,
                              seed=2 + v, v=v)
        x = np.abs(res.states)
        assert (x <= res.pathwise_bound(1.5)).all()
        # equivalent form with the structural delay explicit:
        # lam**(d+v) with d = max(0, D - v)
        d = np.maximum(res.depths - v, 0)
        bound_v = res.bound_constant * 1.5 ** (d + v).astype(float)
        assert (x <= bound_v).all()


def test_rate_refusal_points_at_intrinsic_rate():
    p = PlantParams(lam=1.5, omega=1.0)
    with pytest.raises(ValueError, match="intrinsic"):
        closed_loop_run(p, 0.2, rate="1/2", bits_per_packet=1, horizon=10, trials=1)


def test_float_horizon_guard():
    p = PlantParams(lam=1.5, omega=1.0)
    with pytest.raises(ValueError, match="float fidelity"):
        closed_loop_run(p, 0.2, rate="7/10", bits_per_packet=1,
                        horizon=float_horizon_limit(1.5) + 1, trials=1)


def test_control_noise_absorption_api():
    # gamma_ctrl > 0 runs under the widened contract omega + gamma_ctrl and
    # keeps the pathwise invariants verbatim.
    p = PlantParams(lam=1.5, omega=1.0)
    res = closed_loop_run(p, erasure_delta=0.2, rate="7/10", bits_per_packet=1,
                          horizon=50, trials=40, seed=31, gamma_ctrl=0.4)
    x = np.abs(res.states)
    assert (x <= res.pathwise_bound(1.5)).all()
    # the window honors the widened bound, not the nominal one
    assert res.width_sup > min_window(1.5, 1.0, "7/10") - 1e-9


def test_control_noise_absorption():
    # Running with gamma_ctrl > 0 under omega' = omega + gamma_ctrl keeps
    # the invariants verbatim: inject control noise, widen the contract.
    p = PlantParams(lam=1.5, omega=1.2)  # omega' = 1.0 + 0.2
    obs_f, ctl_f = make_feedback_pair(1.5, 1.2, "7/10", 1)
    from anyloop.channels import ChannelSession, ErasureSpec, channel_step
    session = ChannelSession(ErasureSpec(delta=0.2, kind="packet", bits=1),
                             seed=9, feedback_mode="noiseless-unit-delay")
    O, C = obs_f(), ctl_f()
    gen = rngmod.stream(9, 0, "w")
    x = 0.0
    sup_w = 0.0
    for t in range(70):
        a = O(t, x, session.outputs, t)
        b = channel_step(session, a)
        u_int = C(t, b)
        u_applied = u_int + gen.uniform(-0.1, 0.1)   # Gamma_c = 0.2
        w = gen.uniform(-0.5, 0.5)                   # Omega = 1.0
        eff = u_applied - u_int + w
        sup_w = max(sup_w, abs(eff))
        x = 1.5 * x + u_applied + w
    assert sup_w <= 1.2 / 2  # the combined disturbance honors omega'
    assert abs(x) < 1e4
