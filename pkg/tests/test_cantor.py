import itertools
from fractions import Fraction

import numpy as np
import pytest

from anyloop.cantor import (
    BitStream,
    CantorCodecParams,
    CantorEncoder,
    cantor_encode_step,
    cantor_state,
    extract_bits,
    extract_bits_batch,
)


def exact_params(lam=3, omega=1, rate=1):
    return CantorCodecParams(lam, omega, rate, mode="exact")


def test_constants_lam3_r1():
    p = exact_params()
    assert p.epsilon1 == 1
    assert p.gamma == Fraction(1, 18)
    assert p.w_bound() == Fraction(1, 2)  # gamma * lam**(1 + 1/R) = omega/2


def test_positive_epsilon_requires_rate_below_log2lam():
    with pytest.raises(ValueError):
        CantorCodecParams(1.5, 1.0, 1.0)  # log2(1.5) < 1
    CantorCodecParams(1.5, 1.0, 0.5)      # fine


def test_exact_mode_requires_rational_root():
    # lam=2, R=2 -> mu = sqrt(2): irrational, rejected (eps1 would also be
    # negative here, but lam=9, R=2 -> mu=3 shows the root extraction works).
    with pytest.raises(ValueError):
        CantorCodecParams(2, 1, 2, mode="exact")
    assert CantorCodecParams(9, 1, 2, mode="exact").mu == 3
    with pytest.raises(ValueError):
        CantorCodecParams(5, 1, 2, mode="exact")  # sqrt(5) irrational


def test_exact_mode_fractional_rate():
    p = CantorCodecParams(Fraction(3, 2), 1, Fraction(1, 2), mode="exact")
    assert p.mu == Fraction(9, 4)
    assert p.epsilon1 == Fraction(1, 4)


def test_all_plus_stream_limit():
    # Xv_t / (gamma*lam**t) -> (2+eps1)/(1+eps1) for the all-ones stream.
    p = exact_params()
    bits = BitStream(1, [1] * 40)
    t = 39
    xv = cantor_state(p, bits, t)
    ratio = xv / (p.gamma * p.lam_pow(t))
    limit = (2 + p.epsilon1) / (1 + p.epsilon1)
    assert abs(float(ratio) - float(limit)) < 1e-18


def test_s0_flip_changes_state_by_2gamma_lam_t():
    p = exact_params()
    up = BitStream(1, [1, 1, -1, 1])
    dn = BitStream(1, [-1, 1, -1, 1])
    for t in range(4):
        assert cantor_state(p, up, t) - cantor_state(p, dn, t) == 2 * p.gamma * p.lam_pow(t)


def test_disturbance_within_bound_exact():
    p = exact_params()
    gen = np.random.default_rng(0)
    bits = BitStream(1, gen.choice((-1, 1), size=30))
    enc = CantorEncoder(p, bits)
    for _ in range(29):
        w = enc.step()
        assert abs(w) <= p.omega / 2


def test_encoder_matches_closed_form():
    p = CantorCodecParams(Fraction(3, 2), 1, Fraction(1, 2), mode="exact")
    gen = np.random.default_rng(1)
    bits = BitStream(Fraction(1, 2), gen.choice((-1, 1), size=40))
    enc = CantorEncoder(p, bits)
    for t in range(1, 60):
        enc.step()
        assert enc.xv == cantor_state(p, bits, t)


def test_exact_input_roundtrip_exhaustive_small():
    p = exact_params()
    for L in range(1, 9):
        for tup in itertools.product((-1, 1), repeat=L):
            bits = BitStream(1, tup)
            t = L - 1
            est = extract_bits(p, cantor_state(p, bits, t), t)
            assert np.array_equal(est, np.asarray(tup))


def test_roundtrip_at_later_times():
    # Extraction also works at t beyond the stream end (estimates only for
    # existing bits).
    p = exact_params()
    bits = BitStream(1, [1, -1, -1, 1, -1])
    for t in range(5, 10):
        est = extract_bits(p, cantor_state(p, bits, t), t, n_bits=len(bits))
        assert np.array_equal(est, bits.bits)


def test_gap_bound_brute_force_small():
    # Independent oracle: enumerate all pairs of streams, group by first
    # differing bit, compare the minimum gap to the closed-form bound.
    p = exact_params()
    L = 7
    t = L - 1
    streams = list(itertools.product((-1, 1), repeat=L))
    values = {s: cantor_state(p, BitStream(1, s), t) for s in streams}
    for i in range(L):
        gap = None
        for a, b in itertools.combinations(streams, 2):
            k = next(j for j in range(L) if a[j] != b[j])
            if k != i:
                continue
            d = abs(values[a] - values[b])
            gap = d if gap is None else min(gap, d)
        bound = p.gap_lower_bound(t, i)
        assert gap is not None and gap >= bound


def test_perturbation_below_guarantee_radius_keeps_prefix():
    p = exact_params()
    L, t = 5, 4
    for tup in itertools.product((-1, 1), repeat=L):
        bits = BitStream(1, tup)
        xv = cantor_state(p, bits, t)
        for j in (0, 2, 4):
            r = p.guarantee_radius(t, j)
            for eps in (r * Fraction(9, 10), -r * Fraction(9, 10)):
                est = extract_bits(p, xv + eps, t)
                assert np.array_equal(est[: j + 1], np.asarray(tup[: j + 1]))


def test_tie_resolves_to_plus_one():
    p = exact_params()
    est = extract_bits(p, Fraction(0), 0)
    assert est[0] == 1


def test_t0_sign_example():
    p = exact_params()
    assert extract_bits(p, p.gamma, 0)[0] == 1
    assert extract_bits(p, -p.gamma, 0)[0] == -1


def test_bit_availability_floor_bookkeeping():
    bits = BitStream("7/10", [1] * 20)
    # floor(R t) + 1 bits at time t
    assert bits.available(0) == 1
    assert bits.available(1) == 1
    assert bits.available(2) == 2
    assert bits.available(10) == 8


def test_encode_step_needs_future_bits():
    p = exact_params()
    bits = BitStream(1, [1, 1])
    with pytest.raises(ValueError):
        cantor_encode_step(p, bits, 1)  # needs bit 2


def test_float_batch_matches_scalar():
    p = CantorCodecParams(1.5, 1.0, 0.5, mode="float")
    gen = np.random.default_rng(2)
    t = 20
    n = p.n_bits_at(t)
    vals = gen.normal(0, 5, size=32)
    batch = extract_bits_batch(p, vals, t)
    for i, v in enumerate(vals):
        assert np.array_equal(batch[i], extract_bits(p, float(v), t))


def test_float_horizon_limit_documented():
    p = CantorCodecParams(1.5, 1.0, 0.5, mode="float")
    assert 80 <= p.horizon_limit() <= 95
    assert exact_params().horizon_limit() > 10**12
