"""Scalar plant model, disturbance generators, and time-scale reductions.

The plant is the linear update ``x' = lam * x + u + w`` with a disturbance
magnitude contract ``|w| <= omega / 2`` that is enforced, not assumed.
"""

from collections import deque
from dataclasses import dataclass
import math
from typing import Callable, Optional

import numpy as np

from anyloop import rng as rngmod

__all__ = [
    "PlantParams",
    "PlantState",
    "DisturbanceSource",
    "StabilityTarget",
    "step_plant",
    "sample_continuous",
    "block_time",
    "almost_sure_transform",
    "AlmostSureWrapper",
    "sign_observer",
    "bang_controller",
    "example1_batch",
]


@dataclass(frozen=True)
class PlantParams:
    """Gain, disturbance bound and initial state of the scalar plant.

    ``lam > 1`` is the unstable regime the library is about; ``lam in
    (0, 1]`` is accepted here and rejected by the constructions whose
    formulas need ``lam > 1``.
    """

    lam: float
    omega: float
    x0: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")

    def w_bound(self):
        return self.omega / 2


@dataclass
class PlantState:
    """Current step index and state, with an optional (x, u, w) history ring.

    The ring is bounded so million-step trials run in constant memory.
    ``replay`` recomputes the newest state from the oldest retained one and
    must agree bitwise when the same evaluation order is used.
    """

    t: int = 0
    x: float = 0.0
    history: Optional[deque] = None

    @classmethod
    def initial(cls, params: PlantParams, history_depth: int = 0) -> "PlantState":
        hist = deque(maxlen=history_depth) if history_depth > 0 else None
        return cls(t=0, x=params.x0, history=hist)

    def replay(self, params: PlantParams) -> float:
        """Re-run the retained history through the update law."""
        if not self.history:
            return self.x
        x = self.history[0][0]
        for (_, u, w) in self.history:
            x = params.lam * x + u + w
        return x


def step_plant(params: PlantParams, state: PlantState, u, w) -> PlantState:
    """One step of ``x' = lam*x + u + w``; rejects out-of-contract w."""
    if abs(w) > params.omega / 2:
        raise ValueError(
            f"disturbance {w} violates |w| <= omega/2 = {params.omega / 2}"
        )
    x_next = params.lam * state.x + u + w
    hist = state.history
    if hist is not None:
        hist.append((state.x, u, w))
    return PlantState(t=state.t + 1, x=x_next, history=hist)


_DISTURBANCE_KINDS = ("zero", "iid-uniform", "iid-two-point", "adversarial-callback")


@dataclass
class DisturbanceSource:
    """Bounded disturbance generator.

    ``adversarial-callback`` receives ``(t, history)`` where history is the
    list of past ``(x, u, w)`` triples plus the current state, and may
    implement any strategy; its output is clipped-checked against the bound
    rather than trusted.
    """

    kind: str
    omega: float
    seed: int = 0
    trial: int = 0
    callback: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in _DISTURBANCE_KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == "adversarial-callback" and self.callback is None:
            raise ValueError("adversarial-callback requires a callback")
        self._rng = rngmod.stream(self.seed, self.trial, "disturbance")

    def sample(self, t: int, x: float = 0.0, history=None) -> float:
        half = self.omega / 2
        if self.kind == "zero":
            return 0.0
        if self.kind == "iid-uniform":
            return float(self._rng.uniform(-half, half))
        if self.kind == "iid-two-point":
            return half if self._rng.random() < 0.5 else -half
        w = float(self.callback(t, x, history, self._rng))
        if abs(w) > half:
            raise ValueError(f"adversarial callback returned |w|={abs(w)} > {half}")
        return w


@dataclass(frozen=True)
class StabilityTarget:
    """Which sense of stability a run is judged against."""

    kind: str  # "eta-moment" | "tail-function" | "almost-sure"
    eta: Optional[float] = None
    bound: Optional[float] = None
    tail: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.kind == "eta-moment":
            if self.eta is None or self.eta <= 0:
                raise ValueError("eta-moment target needs eta > 0")
        elif self.kind == "tail-function":
            if self.tail is None:
                raise ValueError("tail-function target needs a tail callable")
        elif self.kind != "almost-sure":
            raise ValueError(f"unknown stability target kind {self.kind!r}")


def sample_continuous(lambda_ct: float, omega_ct: float, tau: float) -> PlantParams:
    """Zero-order-hold reduction of ``dx/dt = lam*x + u + w`` to a step map.

    Returns the discrete params ``lam' = exp(lam*tau)`` and
    ``omega' = omega * (exp(lam*tau) - 1) / lam`` (limit ``omega * tau`` at
    ``lam = 0``).  The product ``tau_c * log(lam')`` is invariant in tau,
    which is what makes the per-second rate threshold well defined.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    lam_d = math.exp(lambda_ct * tau)
    if lambda_ct == 0.0:
        omega_d = omega_ct * tau
    else:
        omega_d = omega_ct * math.expm1(lambda_ct * tau) / lambda_ct
    return PlantParams(lam=lam_d, omega=omega_d)


def block_time(params: PlantParams, n: int) -> PlantParams:
    """View time in blocks of n steps: gain ``lam**n``, bound ``lam**n * omega / (lam-1)``."""
    if n < 1:
        raise ValueError(f"block length must be >= 1, got {n}")
    if params.lam <= 1:
        raise ValueError("block_time requires lam > 1 (bound divides by lam - 1)")
    lam_n = params.lam**n
    return PlantParams(lam=lam_n, omega=lam_n * params.omega / (params.lam - 1), x0=params.x0)


@dataclass
class AlmostSureWrapper:
    """Drive an undisturbed plant to zero using a stabilizer built for a faster one.

    The wrapped stabilizer is designed for gain ``lam_fast`` under persistent
    disturbances; feeding it the rescaled state ``(lam_fast/lam)**t * x_t``
    and scaling its controls back down stabilizes the slower undisturbed
    plant so the eta-moment decays like ``(lam/lam_fast)**(eta*t)``.
    """

    lam: float
    lam_fast: float

    def __post_init__(self):
        if not 0 < self.lam < self.lam_fast:
            raise ValueError("requires 0 < lam < lam_fast")

    def scale_state(self, t: int, x: float) -> float:
        return (self.lam_fast / self.lam) ** t * x

    def scale_control(self, t: int, u_fast: float) -> float:
        return (self.lam / self.lam_fast) ** t * u_fast

    def moment_decay(self, eta: float) -> float:
        """Per-step contraction factor of E|X_t|^eta."""
        return (self.lam / self.lam_fast) ** eta

    def run(self, observer, controller, x0: float, horizon: int):
        """Closed loop on the undisturbed plant; returns the trajectory.

        ``observer``/``controller`` are the fast-system pair: observer maps
        the rescaled state to a channel symbol, controller maps the symbol
        to a fast-system control.
        """
        xs = [x0]
        x = x0
        for t in range(horizon):
            sym = observer(t, self.scale_state(t, x))
            u = self.scale_control(t, controller(t, sym))
            x = self.lam * x + u
            xs.append(x)
        return np.asarray(xs)


def almost_sure_transform(params: PlantParams, lam_fast: float) -> AlmostSureWrapper:
    """Scaling map behind the almost-sure stabilization of an undisturbed plant.

    Requires ``0 < lam < lam_fast``; the undisturbed plant must start inside
    the disturbance bound (``|x0| <= omega/2``) because the initial condition
    is replayed as the fast system's only disturbance.
    """
    if params.lam >= lam_fast:
        raise ValueError("almost_sure_transform requires lam < lam_fast")
    if abs(params.x0) > params.omega / 2:
        raise ValueError("requires |x0| <= omega/2")
    return AlmostSureWrapper(lam=params.lam, lam_fast=lam_fast)


def sign_observer(x):
    """Memoryless 1-bit observer: 1 when the state is positive, else 0."""
    return np.where(np.asarray(x) > 0, 1, 0)


def bang_controller(b, magnitude=1.5):
    """Memoryless controller: push down on symbol 1, up on symbol 0."""
    return np.where(np.asarray(b) == 1, -magnitude, magnitude)


def example1_batch(trials: int, horizon: int, seed: int, lam: float = 1.5,
                   omega: float = 1.0, adversarial: bool = True):
    """Vectorized closed loop: sign observer + bang controller over the
    noiseless 1-bit channel.

    Disturbances are "adversarial-random": with probability 1/2 the
    disturbance pushes the state away from the origin at full magnitude,
    otherwise it is uniform on the contract interval.  Returns the
    (trials, horizon + 1) state array.
    """
    gen = rngmod.stream(seed, 0, "example1")
    x = np.zeros(trials)
    out = np.empty((trials, horizon + 1))
    out[:, 0] = x
    half = omega / 2
    for t in range(horizon):
        b = sign_observer(x)
        u = bang_controller(b, magnitude=lam)
        if adversarial:
            push = np.where(x >= 0, half, -half)
            w = np.where(
                gen.random(trials) < 0.5, push, gen.uniform(-half, half, trials)
            )
        else:
            w = gen.uniform(-half, half, trials)
        x = lam * x + u + w
        out[:, t + 1] = x
    return out
