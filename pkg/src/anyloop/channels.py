"""Memoryless channel models and sessions with optional output feedback.

A spec is an immutable description of the law p(b | a); a session owns the
randomness and the (input, output) log for one trial.  Erasures are a
tagged sentinel, never a numeric value, so a legitimate 0.0 on a
real-valued channel is unambiguous.
"""

from dataclasses import dataclass

import numpy as np

from anyloop import rng as rngmod

__all__ = [
    "ERASURE",
    "DmcSpec",
    "ErasureSpec",
    "AwgnSpec",
    "ChannelSession",
    "channel_step",
    "feedback_view",
    "noiseless_bit_channel",
    "bsc",
    "erasure_dmc",
]


class _Erasure:
    """Singleton output symbol for erased transmissions."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ERASURE"


ERASURE = _Erasure()


@dataclass(frozen=True)
class DmcSpec:
    """Discrete memoryless channel given by a row-stochastic matrix.

    ``transition[a, b]`` is p(output b | input a).  Inputs and outputs are
    integer indices 0..n-1.
    """

    transition: tuple  # tuple of tuples, kept hashable

    def __post_init__(self):
        m = np.asarray(self.transition, dtype=float)
        if m.ndim != 2:
            raise ValueError("transition matrix must be 2-D")
        if (m < 0).any():
            raise ValueError("transition probabilities must be >= 0")
        if np.abs(m.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("transition matrix rows must sum to 1 (tol 1e-12)")
        object.__setattr__(self, "_matrix", m)

    @classmethod
    def from_matrix(cls, matrix) -> "DmcSpec":
        m = np.asarray(matrix, dtype=float)
        return cls(transition=tuple(tuple(row) for row in m))

    @classmethod
    def from_csv(cls, path) -> "DmcSpec":
        """Row-major, header-free CSV of the transition matrix."""
        return cls.from_matrix(np.loadtxt(path, delimiter=",", ndmin=2))

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def input_alphabet_size(self) -> int:
        return self._matrix.shape[0]

    @property
    def output_alphabet_size(self) -> int:
        return self._matrix.shape[1]


@dataclass(frozen=True)
class ErasureSpec:
    """Packet (L-bit) or real-valued erasure channel with erasure prob delta.

    Packet inputs are integers in [0, 2**bits); real inputs are floats.
    The output is either the input or ERASURE.
    """

    delta: float
    kind: str = "packet"  # "packet" | "real"
    bits: int = 1

    def __post_init__(self):
        if not 0 <= self.delta <= 1:
            raise ValueError("delta must be in [0, 1]")
        if self.kind not in ("packet", "real"):
            raise ValueError(f"unknown erasure kind {self.kind!r}")
        if self.kind == "packet" and self.bits < 1:
            raise ValueError("packet erasure channel needs bits >= 1")

    def shannon_capacity(self) -> float:
        """(1 - delta) * L bits per use for the packet channel; inf for real."""
        if self.kind == "real":
            return float("inf")
        return (1.0 - self.delta) * self.bits


@dataclass(frozen=True)
class AwgnSpec:
    """Average-power-constrained additive white Gaussian noise channel."""

    power_limit: float
    noise_power: float

    def __post_init__(self):
        if self.power_limit <= 0 or self.noise_power <= 0:
            raise ValueError("power_limit and noise_power must be > 0")

    def snr(self) -> float:
        return self.power_limit / self.noise_power

    def shannon_capacity(self) -> float:
        return 0.5 * np.log2(1.0 + self.snr())


_FEEDBACK_MODES = ("none", "noiseless-unit-delay", "delayed")


@dataclass
class ChannelSession:
    """Single-trial channel instance: spec + RNG stream + transcript.

    ``feedback_mode`` controls what ``feedback_view(t)`` exposes: nothing,
    outputs through t-1 (unit delay), or outputs through t-1-theta.
    For AWGN sessions a Welford running mean of a**2 tracks the empirical
    input power; exceeding the limit by more than ``power_tolerance`` sets a
    diagnostic flag instead of stopping the trial.
    """

    spec: object
    seed: int = 0
    trial: int = 0
    feedback_mode: str = "none"
    theta: int = 0
    power_tolerance: float = 0.05
    log_inputs: bool = True

    def __post_init__(self):
        if self.feedback_mode not in _FEEDBACK_MODES:
            raise ValueError(f"unknown feedback mode {self.feedback_mode!r}")
        if self.feedback_mode == "noiseless-unit-delay":
            self.theta = 0
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        self.rng = rngmod.stream(self.seed, self.trial, "channel")
        self.inputs = []
        self.outputs = []
        self.n_uses = 0
        self._power_mean = 0.0
        self.power_violation = False

    def _track_power(self, a: float):
        n = len(self.outputs) + 1
        self._power_mean += (a * a - self._power_mean) / n
        if n >= 100 and self._power_mean > self.spec.power_limit * (1 + self.power_tolerance):
            self.power_violation = True

    @property
    def mean_input_power(self) -> float:
        return self._power_mean


def channel_step(session: ChannelSession, a):
    """Push one input through the channel; returns and logs the output."""
    spec = session.spec
    if isinstance(spec, DmcSpec):
        a = int(a)
        if not 0 <= a < spec.input_alphabet_size:
            raise ValueError(f"input symbol {a} outside alphabet")
        b = int(session.rng.choice(spec.output_alphabet_size, p=spec.matrix[a]))
    elif isinstance(spec, ErasureSpec):
        if spec.kind == "packet":
            a = int(a)
            if not 0 <= a < 2**spec.bits:
                raise ValueError(f"packet {a} outside {spec.bits}-bit alphabet")
        else:
            a = float(a)
            if not np.isfinite(a):
                raise ValueError("real erasure channel requires finite input")
        b = ERASURE if session.rng.random() < spec.delta else a
    elif isinstance(spec, AwgnSpec):
        a = float(a)
        if not np.isfinite(a):
            raise ValueError("AWGN channel requires finite input")
        session._track_power(a)
        b = a + float(session.rng.normal(0.0, np.sqrt(spec.noise_power)))
    else:
        raise TypeError(f"unsupported channel spec {type(spec)!r}")
    if session.log_inputs:
        session.inputs.append(a)
    session.outputs.append(b)
    session.n_uses += 1
    return b


def feedback_view(session: ChannelSession, t: int):
    """Outputs available to the encoder at time t: B_0 .. B_{t-1-theta}.

    Exact prefix of the output log, no tolerance.  Raises if the session has
    feedback disabled.
    """
    if session.feedback_mode == "none":
        raise ValueError("feedback_view on a session without feedback")
    upto = max(0, t - session.theta)
    return session.outputs[:upto]


def noiseless_bit_channel() -> DmcSpec:
    """The 1-bit identity channel."""
    return DmcSpec.from_matrix([[1.0, 0.0], [0.0, 1.0]])


def bsc(p: float) -> DmcSpec:
    """Binary symmetric channel with crossover probability p."""
    return DmcSpec.from_matrix([[1 - p, p], [p, 1 - p]])


def erasure_dmc(delta: float, bits: int = 1) -> DmcSpec:
    """Packet erasure channel as an explicit DMC (last output = erasure)."""
    n = 2**bits
    m = np.zeros((n, n + 1))
    for a in range(n):
        m[a, a] = 1 - delta
        m[a, n] = delta
    return DmcSpec.from_matrix(m)
