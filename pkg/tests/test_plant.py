import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from anyloop.plant import (
    AlmostSureWrapper,
    DisturbanceSource,
    PlantParams,
    PlantState,
    StabilityTarget,
    almost_sure_transform,
    block_time,
    example1_batch,
    sample_continuous,
    step_plant,
)


def test_step_zero_fixed_point():
    p = PlantParams(lam=1.5, omega=1.0)
    s = step_plant(p, PlantState(t=0, x=0.0), 0.0, 0.0)
    assert s.x == 0.0 and s.t == 1


def test_step_direct_evaluation():
    p = PlantParams(lam=1.5, omega=1.0)
    s = step_plant(p, PlantState(t=0, x=2.0), -1.5, 0.5)
    assert s.x == 1.5 * 2 - 1.5 + 0.5 == 2.0


def test_step_rejects_contract_violation():
    p = PlantParams(lam=1.5, omega=1.0)
    with pytest.raises(ValueError):
        step_plant(p, PlantState(), 0.0, 0.5001)


def test_param_invariants():
    with pytest.raises(ValueError):
        PlantParams(lam=0.0, omega=1.0)
    with pytest.raises(ValueError):
        PlantParams(lam=1.5, omega=-1.0)


def test_history_replay_bitwise():
    p = PlantParams(lam=1.5, omega=1.0)
    s = PlantState.initial(p, history_depth=64)
    gen = np.random.default_rng(0)
    for _ in range(50):
        s = step_plant(p, s, float(gen.normal()), float(gen.uniform(-0.5, 0.5)))
    assert s.replay(p) == s.x


def test_disturbance_sources_respect_bound():
    for kind in ("zero", "iid-uniform", "iid-two-point"):
        src = DisturbanceSource(kind=kind, omega=1.0, seed=3)
        ws = [src.sample(t) for t in range(2000)]
        assert max(abs(w) for w in ws) <= 0.5


def test_adversarial_callback_checked():
    src = DisturbanceSource(kind="adversarial-callback", omega=1.0, seed=0,
                            callback=lambda t, x, h, g: 0.7)
    with pytest.raises(ValueError):
        src.sample(0)


def test_stability_target_validation():
    StabilityTarget(kind="eta-moment", eta=2.0)
    StabilityTarget(kind="almost-sure")
    with pytest.raises(ValueError):
        StabilityTarget(kind="eta-moment", eta=-1)
    with pytest.raises(ValueError):
        StabilityTarget(kind="tail-function")


# -- continuous-time reduction ------------------------------------------------


def test_sample_continuous_zero_rate_limit():
    p = sample_continuous(0.0, 1.0, 1.0)
    assert p.lam == 1.0 and p.omega == 1.0


def test_sample_continuous_ln2():
    p = sample_continuous(math.log(2), 1.0, 1.0)
    assert p.lam == pytest.approx(2.0, rel=1e-15)
    assert p.omega == pytest.approx(1.0 / math.log(2), rel=1e-14)


def test_rate_threshold_invariant_in_tau():
    # tau_c * log(lam') = lam * tau_c regardless of the sampling choice.
    lam_ct = 0.8
    vals = [math.log(sample_continuous(lam_ct, 1.0, tau).lam) / tau
            for tau in (0.1, 0.5, 1.0, 3.0)]
    assert max(vals) - min(vals) < 1e-12
    assert vals[0] == pytest.approx(lam_ct, rel=1e-12)


def test_continuous_discrete_consistency_against_ode():
    # One zero-order-hold step must match direct integration to 1e-10.
    lam_ct, omega_ct, tau = 0.7, 1.0, 0.8
    p = sample_continuous(lam_ct, omega_ct, tau)
    u_ct, w_ct, x0 = -0.3, 0.4, 1.1
    scale = p.omega / omega_ct  # input gain of the hold reduction
    x_disc = p.lam * x0 + u_ct * scale + w_ct * scale
    sol = solve_ivp(lambda t, x: lam_ct * x + u_ct + w_ct, (0, tau), [x0],
                    rtol=1e-12, atol=1e-14)
    assert x_disc == pytest.approx(sol.y[0, -1], rel=1e-10)


# -- blocked time --------------------------------------------------------------


def test_block_time_n1():
    p = block_time(PlantParams(lam=1.5, omega=1.0), 1)
    assert p.lam == 1.5 and p.omega == pytest.approx(1.5 / 0.5)


def test_block_time_example():
    p = block_time(PlantParams(lam=2.0, omega=1.0), 3)
    assert p.lam == 8.0 and p.omega == pytest.approx(8.0)


def test_block_time_rejects_marginal():
    with pytest.raises(ValueError):
        block_time(PlantParams(lam=1.0, omega=1.0), 2)


def test_within_block_moment_stays_finite():
    # Statistically: max within-block |X| is at most lam**n (|X_kn| + spread).
    gen = np.random.default_rng(1)
    lam, omega, n = 1.3, 1.0, 4
    x = gen.uniform(-1, 1, size=5000)
    spread = omega / 2 * (lam**n - 1) / (lam - 1)
    worst = lam**n * np.abs(x) + spread
    # Eta-moment of the worst-case within-block value is a finite multiple.
    assert np.mean(worst**2) <= lam ** (2 * n) * (np.mean(x**2) + 2 * spread + spread**2)


# -- almost-sure transform -----------------------------------------------------


def test_almost_sure_boundary_decay():
    w = AlmostSureWrapper(lam=1.4999999, lam_fast=1.5)
    assert w.moment_decay(2.0) == pytest.approx(1.0, abs=1e-6)


def test_almost_sure_decay_value():
    w = almost_sure_transform(PlantParams(lam=1.2, omega=1.0, x0=0.3), 1.5)
    assert w.moment_decay(2.0) == pytest.approx(0.8**2)


def test_almost_sure_rejects_bad_gains():
    with pytest.raises(ValueError):
        almost_sure_transform(PlantParams(lam=1.5, omega=1.0), 1.5)


def test_almost_sure_convergence():
    # Wrap a bang-bang stabilizer designed for the fast system; the slow
    # undisturbed plant must converge to 0 (empirical sup over a late
    # horizon goes to ~0).
    lam, lam_fast = 1.2, 1.5
    w = almost_sure_transform(PlantParams(lam=lam, omega=1.0, x0=0.4), lam_fast)

    def observer(t, x_fast):
        return 1 if x_fast > 0 else 0

    def controller(t, sym):
        return -1.5 if sym == 1 else 1.5

    xs = w.run(observer, controller, x0=0.4, horizon=200)
    assert np.abs(xs[:20]).max() > 0  # transient exists
    assert np.abs(xs[-20:]).max() < 1e-10


def test_almost_sure_scaling_maps():
    w = almost_sure_transform(PlantParams(lam=1.2, omega=1.0, x0=0.1), 1.5)
    assert w.scale_state(3, 2.0) == pytest.approx((1.5 / 1.2) ** 3 * 2.0)
    assert w.scale_control(3, 2.0) == pytest.approx((1.2 / 1.5) ** 3 * 2.0)


# -- the worked closed loop ----------------------------------------------------


def test_example1_bound_small():
    states = example1_batch(trials=300, horizon=300, seed=5)
    assert np.abs(states).max() <= 2.0


def test_example1_deterministic():
    a = example1_batch(50, 50, seed=9)
    b = example1_batch(50, 50, seed=9)
    assert np.array_equal(a, b)
