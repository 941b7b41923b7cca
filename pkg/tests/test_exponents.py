import numpy as np
import pytest

from anyloop.channels import DmcSpec, bsc
from anyloop.exponents import dmc_capacity, gallager_e0, random_coding_exponent


def brute_force_exponent(spec, rate, n_rho=1001, n_q=1001):
    """Grid search over (rho, q) for binary-input channels: the oracle."""
    best = 0.0
    rhos = np.linspace(0, 1, n_rho)
    qs = np.linspace(0, 1, n_q)
    for rho in rhos:
        beta = spec.matrix ** (1.0 / (1.0 + rho))
        # vectorize over q
        inner = np.outer(qs, beta[0]) + np.outer(1 - qs, beta[1])
        e0 = -np.log2(np.sum(inner ** (1.0 + rho), axis=1))
        best = max(best, float(np.max(e0) - rho * rate))
    return best


def test_zero_at_and_above_capacity():
    ch = bsc(0.1)
    c = dmc_capacity(ch)
    assert random_coding_exponent(ch, c).value == pytest.approx(0.0, abs=1e-6)
    assert random_coding_exponent(ch, min(c + 0.1, 1.0)).value == pytest.approx(0.0, abs=1e-9)


def test_noiseless_binary_closed_form():
    ch = bsc(0.0)
    for rate in (0.0, 0.3, 0.5, 0.9):
        assert random_coding_exponent(ch, rate).value == pytest.approx(1.0 - rate, abs=1e-9)


def test_bsc_grid_oracle():
    ch = bsc(0.05)
    got = random_coding_exponent(ch, 0.5).value
    want = brute_force_exponent(ch, 0.5)
    assert got == pytest.approx(want, abs=2e-5)


def test_asymmetric_channel_grid_oracle():
    # Z-channel: uniform input is not optimal; exercises the PGA path.
    ch = DmcSpec.from_matrix([[1.0, 0.0], [0.3, 0.7]])
    got = random_coding_exponent(ch, 0.3)
    want = brute_force_exponent(ch, 0.3)
    assert got.value == pytest.approx(want, abs=2e-5)
    assert abs(got.q[0] - 0.5) > 1e-3  # optimizer moved off uniform


def test_exponent_nonincreasing_in_rate():
    ch = bsc(0.08)
    grid = np.linspace(0.0, 0.9, 16)
    vals = [random_coding_exponent(ch, r).value for r in grid]
    assert all(a >= b - 1e-9 for a, b in zip(vals, vals[1:]))


def test_maximizing_q_is_distribution():
    r = random_coding_exponent(bsc(0.05), 0.4)
    assert r.q.sum() == pytest.approx(1.0, abs=1e-9)
    assert (r.q >= 0).all()
    assert r.q[0] == pytest.approx(0.5, abs=1e-6)  # symmetric shortcut


def test_rejects_nonsense_rates():
    with pytest.raises(ValueError):
        random_coding_exponent(bsc(0.1), -0.1)
    with pytest.raises(ValueError):
        random_coding_exponent(bsc(0.1), 1.5)


def test_capacity_values():
    assert dmc_capacity(bsc(0.0)) == pytest.approx(1.0, abs=1e-9)
    p = 0.11
    h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    assert dmc_capacity(bsc(p)) == pytest.approx(1 - h, abs=1e-7)


def test_e0_concavity_samples():
    ch = bsc(0.07)
    q = np.array([0.5, 0.5])
    rhos = np.linspace(0, 1, 21)
    vals = [gallager_e0(ch, r, q) for r in rhos]
    # E0 is nondecreasing and concave in rho for fixed q.
    diffs = np.diff(vals)
    assert (diffs > -1e-12).all()
    assert (np.diff(diffs) < 1e-9).all()
