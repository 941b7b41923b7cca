from fractions import Fraction

import numpy as np
import pytest

from anyloop.cantor import BitStream, CantorCodecParams
from anyloop.channels import ChannelSession, ErasureSpec, noiseless_bit_channel
from anyloop.reduction import Reduction, example1_pair, reduction_build
from anyloop.reliability import estimate_reliability
from anyloop.stabilizer import make_feedback_pair
from anyloop import rng as rngmod


def exact_codec():
    return CantorCodecParams(Fraction(3, 2), 1, Fraction(1, 2), mode="exact")


def make_stream(params, horizon, seed, trial=0):
    gen = rngmod.stream(seed, trial, "bits")
    return BitStream(params.rate, gen.choice((-1, 1), size=params.n_bits_at(horizon) + 1))


def run_example1_trial(seed, trial, horizon=80, keep_states=False):
    p = exact_codec()
    obs_f, ctl_f = example1_pair(1.5, exact=True)
    red = reduction_build(obs_f, ctl_f, p)
    session = ChannelSession(noiseless_bit_channel(), seed=seed, trial=trial,
                             feedback_mode="noiseless-unit-delay")
    stream = make_stream(p, horizon, seed, trial)
    return red, red.run_trial(session, stream, horizon, keep_states=keep_states)


def test_requires_feedback():
    p = exact_codec()
    obs_f, ctl_f = example1_pair(1.5, exact=True)
    red = reduction_build(obs_f, ctl_f, p)
    session = ChannelSession(noiseless_bit_channel(), seed=0)
    with pytest.raises(ValueError, match="feedback"):
        red.run_trial(session, make_stream(p, 10, 0), 10)


def test_randomized_controller_needs_shared_seed():
    p = exact_codec()
    obs_f, ctl_f = example1_pair(1.5, exact=True)
    with pytest.raises(ValueError, match="common randomness"):
        reduction_build(obs_f, ctl_f, p, controller_randomized=True)
    reduction_build(obs_f, ctl_f, p, controller_randomized=True, shared_seed=1)


def test_diverged_controller_copies_detected():
    p = exact_codec()

    def obs_f():
        return lambda t, x, outputs, n: 1 if x > 0 else 0

    class UnseededController:
        def __init__(self):
            self.gen = np.random.default_rng()  # fresh OS entropy: copies differ

        def __call__(self, t, b):
            return Fraction(3, 2) * (1 if self.gen.random() < 0.5 else -1)

    red = reduction_build(obs_f, UnseededController, p)
    session = ChannelSession(noiseless_bit_channel(), seed=0,
                             feedback_mode="noiseless-unit-delay")
    with pytest.raises(AssertionError, match="diverged"):
        red.run_trial(session, make_stream(p, 40, 0), 40)


def test_example1_state_bound_and_containment():
    red, res = run_example1_trial(seed=1, trial=0, keep_states=True)
    assert res.max_abs_state <= 2.0
    assert res.containment_violations == 0


def test_example1_zero_errors_beyond_guaranteed_delay():
    # |X| <= 2 forces every estimate older than d* channel uses to be right;
    # fresher bits may flip, so d* is the honest form of "zero errors".
    p = exact_codec()
    red, res = run_example1_trial(seed=3, trial=0)
    d_star = red.guaranteed_error_free_delay(2.0)
    assert 10 <= d_star <= 12
    delays = np.asarray(res.table.error_delays)
    finite = delays[np.isfinite(delays)]
    assert finite.size > 0           # small-delay errors do occur
    assert finite.max() < d_star     # never at or beyond the guarantee


def test_containment_on_bec_loop_exact():
    # Wrap the erasure-channel sufficiency pair; every decoding error must
    # coincide with a large simulated state (exact arithmetic, exact check).
    p = exact_codec()
    obs_f, ctl_f = make_feedback_pair(Fraction(3, 2), Fraction(1), "7/10", 1,
                                      exact=True, initial_width=Fraction(1))
    red = reduction_build(obs_f, ctl_f, p)
    total_checks = 0
    for trial in range(4):
        session = ChannelSession(ErasureSpec(delta=0.2, kind="packet", bits=1),
                                 seed=11, trial=trial,
                                 feedback_mode="noiseless-unit-delay")
        stream = make_stream(p, 50, 11, trial)
        res = red.run_trial(session, stream, 50)
        assert res.containment_violations == 0
        total_checks += res.containment_checks
    assert total_checks > 0


def test_markov_moment_bound_on_reliability():
    # g_hat(d) <= K * (1/gamma + 1/(gamma*eps1))**eta * lam**(-eta*d) with
    # K the measured eta-moment of the wrapped loop's state.
    p = exact_codec()
    obs_f, ctl_f = example1_pair(1.5, exact=True)
    red = reduction_build(obs_f, ctl_f, p)
    tables, moments = [], []
    horizon, eta = 60, 2.0
    for trial in range(30):
        session = ChannelSession(noiseless_bit_channel(), seed=21, trial=trial,
                                 feedback_mode="noiseless-unit-delay")
        res = red.run_trial(session, make_stream(p, horizon, 21, trial),
                            horizon, keep_states=True)
        tables.append(res.table)
        moments.append(np.mean(res.states**eta))
    k_moment = float(np.mean(moments))
    rep = estimate_reliability(tables, d_grid=np.arange(0, 20))
    g, e1 = float(p.gamma), float(p.epsilon1)
    const = k_moment * (1 / g + 1 / (g * e1)) ** eta
    lam = 1.5
    for d, ghat in zip(rep.delays, rep.g_hat):
        assert ghat <= min(1.0, const * lam ** (-eta * d)) + 1e-12


def test_reduction_deterministic():
    _, a = run_example1_trial(seed=5, trial=2)
    _, b = run_example1_trial(seed=5, trial=2)
    assert a.table.error_delays == b.table.error_delays
