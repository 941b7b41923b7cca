"""Embedding a bitstream into bounded plant disturbances and extracting it back.

Bits ``S_k in {+1, -1}`` arrive at rate R (bit k usable from time k/R) and
are folded into the disturbance-driven state

    Xv_t = gamma * lam**t * sum_{k<=floor(R t)} (2 + eps1)**(-k) * S_k

with ``2 + eps1 = lam**(1/R)``.  Distinct streams that first differ in bit i
stay separated by a gap growing like ``lam**(t - i/R)``, so a threshold scan
recovers every bit whose gap exceeds the perturbation of the input.

Two arithmetic modes:

* ``float``: fast, but the gap of a fresh bit is ``lam**(-t)`` relative to
  the state, so extraction degrades once ``lam**t`` exceeds about 2**52
  (t ~ 89 for lam = 1.5).  ``horizon_limit`` reports the safe range.
* ``exact``: `fractions.Fraction` throughout; requires lam, omega and
  ``lam**(1/R)`` rational (e.g. integer lam with R = 1, or lam = 3/2 with
  R = 1/2).  Exhaustive tests are bit-exact at any horizon.
"""

from dataclasses import dataclass
from fractions import Fraction
import math
from typing import Optional, Union

import numpy as np

__all__ = [
    "BitStream",
    "CantorCodecParams",
    "cantor_state",
    "cantor_encode_step",
    "extract_bits",
    "extract_bits_batch",
    "CantorEncoder",
]

Number = Union[float, Fraction]


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"cannot interpret {x!r} as a rational rate")
        # Read the float as its (exact) decimal literal: 0.7 -> 7/10, which
        # is what the floor bookkeeping floor(R*t) should see.
        return Fraction(str(x))
    raise TypeError(f"cannot convert {type(x)} to Fraction")


def _int_nth_root(n: int, k: int) -> Optional[int]:
    """Exact integer k-th root of n, or None."""
    if n < 0:
        return None
    if n in (0, 1):
        return n
    r = int(round(n ** (1.0 / k)))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**k == n:
            return cand
    return None


def _rational_root(x: Fraction, k: int) -> Optional[Fraction]:
    num = _int_nth_root(x.numerator, k)
    den = _int_nth_root(x.denominator, k)
    if num is None or den is None:
        return None
    return Fraction(num, den)


@dataclass
class BitStream:
    """Bits in {+1,-1} with bit k available from time k / rate."""

    rate: Fraction
    bits: np.ndarray

    def __init__(self, rate, bits):
        self.rate = _as_fraction(rate)
        if self.rate <= 0:
            raise ValueError("rate must be > 0")
        arr = np.asarray(bits, dtype=np.int64)
        if arr.size and not np.isin(arr, (-1, 1)).all():
            raise ValueError("bits must be +1 or -1")
        self.bits = arr

    @classmethod
    def random(cls, rate, n_bits: int, rng: np.random.Generator) -> "BitStream":
        return cls(rate, rng.choice((-1, 1), size=n_bits))

    def available(self, t: int) -> int:
        """Number of bits available at integer time t: floor(R t) + 1."""
        return int(self.rate * t) + 1

    def __len__(self):
        return len(self.bits)


class CantorCodecParams:
    """Constants of the embedding for one (lam, omega, rate) triple.

    ``eps1 = lam**(1/R) - 2`` must be positive, i.e. R < log2(lam);
    ``gamma = omega / (2 * lam**(1 + 1/R))`` keeps every simulated
    disturbance inside the plant contract.
    """

    def __init__(self, lam, omega, rate, mode: str = "float"):
        if mode not in ("float", "exact"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.rate = _as_fraction(rate)
        if self.rate <= 0:
            raise ValueError("rate must be > 0")
        if mode == "exact":
            self.lam = _as_fraction(lam)
            self.omega = _as_fraction(omega)
            inv_r = 1 / self.rate  # Fraction b/a
            lam_pow = self.lam**inv_r.numerator
            mu = _rational_root(lam_pow, inv_r.denominator)
            if mu is None:
                raise ValueError(
                    f"exact mode needs rational lam**(1/R); lam={self.lam}, R={self.rate}"
                )
            self.mu = mu
            two = Fraction(2)
        else:
            self.lam = float(lam)
            self.omega = float(omega)
            self.mu = self.lam ** float(1 / self.rate)
            two = 2.0
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        self.epsilon1 = self.mu - two
        if self.epsilon1 <= 0:
            raise ValueError(
                f"rate {self.rate} >= log2(lam) for lam={self.lam}: eps1 <= 0"
            )
        self.gamma = self.omega / (2 * self.lam * self.mu)

    # -- scales ---------------------------------------------------------

    def lam_pow(self, t: int) -> Number:
        return self.lam**t

    def w_bound(self) -> Number:
        """gamma * lam**(1 + 1/R), which equals omega / 2 by construction."""
        return self.gamma * self.lam * self.mu

    def n_bits_at(self, t: int) -> int:
        return int(self.rate * t) + 1

    def gap_lower_bound(self, t: int, i: int) -> Number:
        """Minimum spacing of states whose streams first differ at bit i."""
        e = self.epsilon1
        return self.lam_pow(t) * self.mu ** (-i) * 2 * self.gamma * e / (1 + e)

    def guarantee_radius(self, t: int, j: int) -> Number:
        """Perturbations below this leave bits 0..j intact at time t."""
        e = self.epsilon1
        return self.lam_pow(t) * self.mu ** (-j) * self.gamma * e / (1 + e)

    def horizon_limit(self) -> int:
        """Last step at which float mode still resolves fresh bits."""
        if self.mode == "exact":
            return np.iinfo(np.int64).max
        return int(52 * math.log(2) / math.log(float(self.lam)))


def _check_bits_through(stream: BitStream, k: int):
    if k >= len(stream.bits):
        raise ValueError(f"encoding needs bits through index {k}, have {len(stream.bits)}")


def cantor_state(params: CantorCodecParams, stream: BitStream, t: int) -> Number:
    """The disturbance-driven state at time t for a given stream."""
    m = min(params.n_bits_at(t) - 1, len(stream.bits) - 1)
    mu_inv = 1 / params.mu
    acc = 0 if params.mode == "exact" else 0.0
    # Horner from the deepest bit keeps float rounding contained.
    for k in range(m, -1, -1):
        acc = acc * mu_inv + int(stream.bits[k])
    return params.gamma * params.lam_pow(t) * acc


def cantor_encode_step(params: CantorCodecParams, stream: BitStream, t: int) -> Number:
    """Disturbance W_t that folds the step-(t+1) bits into the state.

    Needs bits through floor(R*(t+1)); returns a value with
    |W_t| <= omega/2 guaranteed by the gamma choice.
    """
    lo = params.n_bits_at(t)       # floor(R t) + 1
    hi = params.n_bits_at(t + 1) - 1  # floor(R (t+1))
    if hi < lo:
        return Fraction(0) if params.mode == "exact" else 0.0
    _check_bits_through(stream, hi)
    scale = params.gamma * params.lam_pow(t + 1)
    acc = 0 if params.mode == "exact" else 0.0
    mu_inv = 1 / params.mu
    for k in range(hi, lo - 1, -1):
        acc = acc * mu_inv + int(stream.bits[k])
    return scale * params.mu ** (-lo) * acc


def extract_bits(params: CantorCodecParams, value: Number, t: int,
                 n_bits: Optional[int] = None) -> np.ndarray:
    """Threshold scan recovering bit estimates from a state-like input.

    Ties (input exactly on a threshold) resolve to +1.  If the input is
    within ``guarantee_radius(t, j)`` of the true state, bits 0..j are
    exact.  Always returns a full estimate vector for the bits available
    at time t (or ``n_bits`` if given).
    """
    if n_bits is None:
        n_bits = params.n_bits_at(t)
    zero = Fraction(0) if params.mode == "exact" else 0.0
    threshold = zero
    unit = params.gamma * params.lam_pow(t)
    est = np.empty(n_bits, dtype=np.int64)
    mu_inv = 1 / params.mu
    term = unit
    for i in range(n_bits):
        if value >= threshold:
            est[i] = 1
            threshold = threshold + term
        else:
            est[i] = -1
            threshold = threshold - term
        term = term * mu_inv
    return est


def extract_bits_batch(params: CantorCodecParams, values: np.ndarray, t: int,
                       n_bits: Optional[int] = None) -> np.ndarray:
    """Vectorized float-mode extraction over many inputs at one time."""
    if params.mode != "float":
        raise ValueError("batch extraction is float-mode only")
    if n_bits is None:
        n_bits = params.n_bits_at(t)
    values = np.asarray(values, dtype=float)
    thresholds = np.zeros_like(values)
    est = np.empty((values.shape[0], n_bits), dtype=np.int64)
    term = params.gamma * params.lam_pow(t)
    mu_inv = 1.0 / params.mu
    for i in range(n_bits):
        s = np.where(values >= thresholds, 1, -1)
        est[:, i] = s
        thresholds = thresholds + term * s
        term *= mu_inv
    return est


class CantorEncoder:
    """Stateful encoder: tracks Xv_t while emitting the W_t sequence."""

    def __init__(self, params: CantorCodecParams, stream: BitStream):
        self.params = params
        self.stream = stream
        self.t = 0
        _check_bits_through(stream, 0)
        self.xv = params.gamma * int(stream.bits[0])  # bit 0 rides X_0

    def step(self) -> Number:
        """Advance one step, returning the disturbance to apply."""
        w = cantor_encode_step(self.params, self.stream, self.t)
        self.xv = self.params.lam * self.xv + w
        self.t += 1
        return w
