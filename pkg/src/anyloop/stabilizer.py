"""Stabilization when the observer can see the channel outputs.

The observer simulates a virtual closed loop: it keeps the virtual state
``xbar`` inside a shrinking certainty window by spending R bits per step on
a virtual control drawn from ``2**r_t`` uniformly spaced values, and ships
those bits through an anytime code.  The controller mirrors the virtual
controls from the decoder's rolling estimates and steers the real plant to
track them; an estimate wrong for d steps displaces the state by at most
``lam**d`` times a constant.

Controls are computed in a drift-free incremental form: each step's control
is the freshest virtual-control estimate plus gain-weighted corrections for
the estimates that changed since the previous step.  This is algebraically
identical to the textbook "tracking model" difference of two running sums
but never materializes the exponentially growing sums, so horizons are
unbounded; an optional from-scratch recomputation cross-checks it on short
runs.

Arithmetic is generic: floats for statistics, `fractions.Fraction` end to
end when exact pathwise assertions are required.
"""

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
import math
from typing import List, Optional

import numpy as np

from anyloop.channels import ERASURE, ErasureSpec, ChannelSession, channel_step
from anyloop.lattice import assign_half_overlap
from anyloop.reliability import AnytimeEstimateTable
from anyloop.retransmit import RetransmitDecoder, RetransmitEncoder
from anyloop import rng as rngmod

__all__ = [
    "VirtualObserverState",
    "ControllerInternalModels",
    "NoiseBounds",
    "observer_emit",
    "controller_act",
    "closed_loop_run",
    "overlapping_bin_quantize",
    "required_rate",
    "min_window",
    "make_feedback_pair",
    "LoopResult",
]


@dataclass(frozen=True)
class NoiseBounds:
    """Bounds on state-observation and control-application noise."""

    gamma_obs: float = 0.0
    gamma_ctrl: float = 0.0

    def __post_init__(self):
        if self.gamma_obs < 0 or self.gamma_ctrl < 0:
            raise ValueError("noise bounds must be >= 0")


def min_window(lam: float, omega: float, rate) -> float:
    """Smallest sustainable certainty window omega / (1 - lam * 2**-R).

    Exact for integer rates; for fractional rates the floor bookkeeping
    makes the width orbit periodic and its supremum is what matters (see
    ``WidthSchedule.sup``).
    """
    if not isinstance(rate, (int, float)):
        rate = float(Fraction(str(rate)))
    shrink = 1.0 - float(lam) * 2.0 ** (-float(rate))
    if shrink <= 0:
        raise ValueError(
            f"rate {rate} <= log2(lam) for lam={lam}: no window is sustainable "
            "(the loop needs more than the plant's intrinsic rate)"
        )
    return float(omega) / shrink


def overlapping_bin_quantize(x_noisy, delta, gamma) -> int:
    """Half-overlapping doubled bins: the returned width-delta interval is
    guaranteed to contain the true state when |noise| < gamma/2."""
    if not delta > 2 * gamma:
        raise ValueError(f"requires delta > 2*gamma, got delta={delta}, gamma={gamma}")
    return assign_half_overlap(x_noisy, delta)


def required_rate(n: int, lam: float) -> float:
    """Rate floor 1/n + log2(lam) when the overlap bit is amortized over
    blocks of n steps."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 1.0 / n + math.log2(float(lam))


def float_horizon_limit(lam: float) -> int:
    """Longest horizon double precision can faithfully carry this loop.

    The tracking law cancels terms that grow like lam**t, so rounding
    injects an effective disturbance ~ lam**t * eps; past roughly
    2**45 / lam**t that noise is no longer negligible against the window.
    Exact (Fraction) mode has no such limit.
    """
    return int(45 * math.log(2) / math.log(float(lam)))


def solve_width_cycle(lam, omega, rate) -> list:
    """Stationary periodic certainty-window widths for a rational rate.

    The bit schedule r_t = floor(R(t+1)) - floor(Rt) has period b for
    R = a/b, making the width recursion w' = lam*w/2**r + omega linear and
    periodic; its unique cycle is returned as Fractions.  Using the cycle
    as the official window (instead of the from-zero recursion that only
    approaches it) keeps every quantity on a fixed denominator lattice,
    which is what makes exact long-horizon runs cheap.
    """
    r_frac = rate if isinstance(rate, Fraction) else Fraction(str(rate))
    lam = Fraction(lam)
    omega = Fraction(omega)
    b = r_frac.denominator
    bits = [int(r_frac * (t + 1)) - int(r_frac * t) for t in range(b)]
    # One pass expresses w_b = A*w_0 + B.
    a_coef, b_coef = Fraction(1), Fraction(0)
    for r in bits:
        a_coef = lam * a_coef / 2**r
        b_coef = lam * b_coef / 2**r + omega
    if a_coef >= 1:
        raise ValueError("rate <= log2(lam): width cycle does not contract")
    w0 = b_coef / (1 - a_coef)
    widths = [w0]
    for r in bits[:-1]:
        widths.append(lam * widths[-1] / 2**r + omega)
    return widths


class WidthSchedule:
    """Deterministic certainty-window widths shared by both loop ends.

    ``kind='recursion'`` follows w' = lam*w/2**r + omega from an initial
    width (natural for floats); ``kind='cycle'`` uses the stationary
    periodic solution, whose fixed denominators keep exact arithmetic on a
    constant lattice.  Either way the induction inequality
    ``lam * w_t / 2**r_t + omega <= w_{t+1}`` holds, which is all the
    containment proof needs.
    """

    def __init__(self, lam, omega, rate, kind: str = "recursion",
                 initial_width=0, exact: bool = False):
        self.exact = exact
        conv = Fraction if exact else float
        self.lam = conv(lam)
        self.omega = conv(omega)
        self.rate = rate if isinstance(rate, Fraction) else Fraction(str(rate))
        if float(self.rate) <= math.log2(float(self.lam)):
            raise ValueError(
                f"rate {self.rate} <= log2(lam): below the plant's intrinsic rate"
            )
        self.kind = kind
        self._bits_cache = []
        if kind == "cycle":
            cyc = solve_width_cycle(self.lam, self.omega, self.rate)
            if not exact:
                cyc = [float(c) for c in cyc]
            if initial_width and conv(initial_width) > cyc[0]:
                raise ValueError("initial width exceeds the stationary window")
            self._cycle = cyc
        elif kind == "recursion":
            self._widths = [conv(initial_width)]
        else:
            raise ValueError(f"unknown width schedule kind {kind!r}")

    def bits(self, t: int) -> int:
        cache = self._bits_cache
        while len(cache) <= t:
            s_ = len(cache)
            cache.append(int(self.rate * (s_ + 1)) - int(self.rate * s_))
        return cache[t]

    def of(self, t: int):
        if self.kind == "cycle":
            return self._cycle[t % len(self._cycle)]
        while len(self._widths) <= t:
            s = len(self._widths) - 1
            self._widths.append(
                self.lam * self._widths[-1] / (1 << self.bits(s)) + self.omega
            )
        return self._widths[t]

    def sup(self, horizon: int) -> float:
        return max(float(self.of(t)) for t in range(horizon + 1))


class VirtualObserverState:
    """Virtual process kept inside the certainty window of a WidthSchedule.

    Tracks ``xbar`` (the virtual state) and the per-step symbol alphabet
    ``2**r_t`` given by the floor bookkeeping of a possibly fractional
    rate.
    """

    def __init__(self, lam, omega, rate, delta=None, initial_width=0,
                 exact: bool = False, schedule: Optional[WidthSchedule] = None):
        self.exact = exact
        if exact:
            self.lam = Fraction(lam)
            self.omega = Fraction(omega)
            self.half = Fraction(1, 2)
            self.xbar = Fraction(0)
        else:
            self.lam = float(lam)
            self.omega = float(omega)
            self.half = 0.5
            self.xbar = 0.0
        self.rate = rate if isinstance(rate, Fraction) else Fraction(str(rate))
        if schedule is None:
            schedule = WidthSchedule(lam, omega, self.rate, kind="recursion",
                                     initial_width=initial_width, exact=exact)
        self.schedule = schedule
        self.delta = delta
        if delta is not None and float(delta) < min_window(self.lam, self.omega, self.rate) - 1e-12:
            raise ValueError(
                f"delta {delta} below the minimum window "
                f"{min_window(self.lam, self.omega, self.rate)}"
            )
        self.t = 0
        self.width = schedule.of(0)
        self.max_width = self.width
        self._pending_ubar = None

    def bits_at(self, t: int) -> int:
        return self.schedule.bits(t)

    # -- one step ---------------------------------------------------------

    def emit(self) -> tuple:
        """Choose this step's virtual control; returns (cell, n_bits)."""
        if self._pending_ubar is not None:
            raise RuntimeError("emit called twice without absorb")
        r = self.bits_at(self.t)
        cell, ubar = _cell_of(self.lam, self.width, r, self.xbar, self.half)
        self._pending_ubar = ubar
        return cell, r

    def absorb(self, w):
        """Apply the chosen virtual control and the true disturbance."""
        if self._pending_ubar is None:
            raise RuntimeError("absorb called before emit")
        self.xbar = self.lam * self.xbar + self._pending_ubar + w
        self._pending_ubar = None
        self.t += 1
        self.width = self.schedule.of(self.t)
        if self.width > self.max_width:
            self.max_width = self.width
        half_w = self.width * self.half
        slack = 0 if self.exact else 1e-9 * max(1.0, float(self.width))
        if abs(self.xbar) > half_w + slack:
            raise AssertionError(
                f"window induction violated at t={self.t}: |xbar|={self.xbar} "
                f"> width/2={half_w}"
            )


def _cell_of(lam, width, r: int, xbar, half):
    """Cell index and virtual control for a state inside [-width/2, width/2]."""
    m = 1 << r
    span = lam * width
    if m == 1 or span == 0:
        return 0, span * 0
    cell_w = span / m
    pos = lam * xbar + span * half
    cell = math.floor(pos / cell_w)
    cell = min(max(cell, 0), m - 1)
    # Floats can land one cell off at a boundary; take the best of the
    # neighbors so the residual is provably inside half a cell.
    if not isinstance(span, Fraction):
        best = min(
            (c for c in (cell - 1, cell, cell + 1) if 0 <= c < m),
            key=lambda c: abs(lam * xbar - (-span * half + (c + half) * cell_w)),
        )
        cell = best
    center = -span * half + (cell + half) * cell_w
    return cell, -center


def ubar_of_cell(lam, width, r: int, cell: int, half):
    """Virtual-control value the controller reconstructs from a cell index."""
    m = 1 << r
    span = lam * width
    if m == 1 or span == 0:
        return span * 0
    cell_w = span / m
    center = -span * half + (cell + half) * cell_w
    return -center


def observer_emit(x_obs, observer: VirtualObserverState) -> tuple:
    """Spec-shaped entry point: sync the observed virtual state, then emit.

    Returns ``(cell, n_bits, observer)``; the caller must still call
    ``observer.absorb(w)`` with the step's disturbance.
    """
    half_w = observer.width * observer.half
    slack = 0 if observer.exact else 1e-9 * max(1.0, float(observer.width))
    if abs(x_obs) > half_w + slack:
        raise AssertionError("observed virtual state outside the certainty window")
    observer.xbar = x_obs
    cell, r = observer.emit()
    return cell, r, observer


# ---------------------------------------------------------------------------
# Controller
# ---------------------------------------------------------------------------


class _ValueProvider:
    """Symbol index -> virtual-control estimate under a decoder view.

    A view is the number of finalized bits; pending symbols read as a fixed
    default.  ``prepare`` lets block-replay providers rebuild suffix values
    once per action.
    """

    def prepare(self, view_f: int, upto: int):
        pass

    def value(self, i: int, view_f: int):
        raise NotImplementedError

    def est_symbol(self, i: int, view_f: int):
        raise NotImplementedError

    def first_pending_symbol(self, view_f: int) -> int:
        raise NotImplementedError


class StepCellProvider(_ValueProvider):
    """Per-step symbols: cell i maps to a control via the deterministic
    width schedule (exact-observation construction)."""

    def __init__(self, lam, omega, rate, decoder: RetransmitDecoder,
                 schedule: Optional[WidthSchedule] = None,
                 initial_width=0, exact=False, default_bit=1):
        self.exact = exact
        self.lam = Fraction(lam) if exact else float(lam)
        self.omega = Fraction(omega) if exact else float(omega)
        self.half = Fraction(1, 2) if exact else 0.5
        self.rate = rate if isinstance(rate, Fraction) else Fraction(str(rate))
        self.decoder = decoder
        self.default_bit = default_bit
        if schedule is None:
            schedule = WidthSchedule(lam, omega, self.rate, kind="recursion",
                                     initial_width=initial_width, exact=exact)
        self.schedule = schedule
        self._bases = [0]  # _bases[i] = floor(rate * i), extended lazily
        self._val_cache = {}  # (symbol, cell) -> virtual-control value

    def _extend_bases(self, i: int):
        bases = self._bases
        while len(bases) <= i + 1:
            bases.append(int(self.rate * len(bases)))

    def bits_of(self, i: int) -> int:
        self._extend_bases(i)
        return self._bases[i + 1] - self._bases[i]

    def bit_base(self, i: int) -> int:
        self._extend_bases(i)
        return self._bases[i]

    def width(self, i: int):
        return self.schedule.of(i)

    def est_symbol(self, i: int, view_f: int) -> int:
        r = self.bits_of(i)
        if r == 0:
            return 0
        base = self.bit_base(i)
        cell = 0
        for k in range(r):
            bit = self.decoder.decoded[base + k] if base + k < view_f else self.default_bit
            if bit == 1:
                cell |= 1 << k
        return cell

    def value(self, i: int, view_f: int):
        cell = self.est_symbol(i, view_f)
        got = self._val_cache.get((i, cell))
        if got is None:
            got = ubar_of_cell(self.lam, self.width(i), self.bits_of(i),
                               cell, self.half)
            self._val_cache[(i, cell)] = got
        return got

    def first_pending_symbol(self, view_f: int) -> int:
        # Smallest i with floor(rate*(i+1)) > view_f, i.e. whose bit span is
        # not fully finalized; bisect over the cached cumulative bit counts.
        lo, hi = 0, 1
        while True:
            self._extend_bases(hi)
            if self._bases[hi + 1] > view_f:
                break
            hi *= 2
        while lo < hi:
            mid = (lo + hi) // 2
            if self._bases[mid + 1] <= view_f:
                lo = mid + 1
            else:
                hi = mid
        return lo

    def changed_since(self, f_prev: int, f_cur: int, upto: int):
        """Symbols whose estimate may differ between the two views: any
        symbol with a bit index in (f_prev, f_cur], including partially
        finalized ones."""
        if f_cur <= f_prev:
            return []
        lo = self.first_pending_symbol(f_prev)
        hi = lo
        while hi <= upto and self.bit_base(hi) < f_cur:
            hi += 1
        return [i for i in range(lo, hi) if self.bits_of(i) > 0]


class ControllerInternalModels:
    """Model pair behind the control law ``u = target(t+1) - gain * model(t)``.

    ``act`` evaluates that difference in closed form; ``xtilde`` (the
    control-driven model) and a from-scratch target recomputation are kept
    for verification on short horizons.
    """

    def __init__(self, provider, gain, v: int = 0, exact: bool = False,
                 track_absolute: bool = False):
        self.provider = provider
        self.gain = gain
        self.v = v
        self.exact = exact
        zero = Fraction(0) if exact else 0.0
        self.track_absolute = track_absolute
        self.xtilde = zero
        self._zero = zero
        self._prev_vals: List = []
        self._prev_view: int = 0
        self._views = deque([0], maxlen=v + 1)
        self.last_action = zero
        self.n_actions = 0

    def push_view(self, view_f: int):
        self._views.append(view_f)

    def current_view(self) -> int:
        return self._views[0]

    def act(self, k: int, view_f: Optional[int] = None) -> object:
        """Control for symbol step k under the (delayed) decoder view."""
        f = self.current_view() if view_f is None else view_f
        self.provider.prepare(f, k)
        while len(self._prev_vals) < k:
            i = len(self._prev_vals)
            self._prev_vals.append(self.provider.value(i, self._prev_view))
        u = self.provider.value(k, f)
        for i in self.provider.changed_since(self._prev_view, f, k - 1):
            new_v = self.provider.value(i, f)
            old_v = self._prev_vals[i]
            if new_v != old_v:
                u = u + self.gain ** (k - i) * (new_v - old_v)
                self._prev_vals[i] = new_v
        if len(self._prev_vals) == k:
            self._prev_vals.append(self.provider.value(k, f))
        self._prev_view = f
        if self.track_absolute:
            self.xtilde = self.gain * self.xtilde + u
        self.last_action = u
        self.n_actions += 1
        return u

    def target_from_scratch(self, k: int, view_f: int):
        """sum_i gain**(k-i) * value(i) -- O(k), for verification."""
        self.provider.prepare(view_f, k)
        acc = self._zero
        for i in range(k + 1):
            acc = self.gain * acc + self.provider.value(i, view_f)
        return acc

    def oldest_mismatch(self, k: int, true_symbols) -> Optional[int]:
        """Oldest symbol index whose estimate (under the acting view)
        disagrees with the truth, scanning only the pending window."""
        f = self._prev_view
        start = self.provider.first_pending_symbol(f)
        for i in range(start, k + 1):
            if self.provider.est_symbol(i, f) != true_symbols[i]:
                return i
        return None


def controller_act(models: ControllerInternalModels, t: int):
    """Spec-shaped wrapper: control for step t from the current estimates."""
    return models.act(t)


# ---------------------------------------------------------------------------
# The full observer/controller pair over an erasure channel with feedback
# ---------------------------------------------------------------------------


class FeedbackObserver:
    """'O': sees the plant state and the channel feedback, emits packets."""

    def __init__(self, pair_cfg, controller_replica):
        c = pair_cfg
        self.cfg = c
        self.vobs = VirtualObserverState(
            c["lam"], c["omega"], c["rate"], delta=c.get("delta"),
            initial_width=c.get("initial_width", 0), exact=c["exact"],
            schedule=c["make_schedule"](),
        )
        self.enc = RetransmitEncoder(c["bits_per_packet"], c["arrived_by"])
        self.replica = controller_replica
        self._n_feedback_seen = 0
        self._prev_x = None
        self._prev_u = None
        self.true_cells: List[int] = []

    def __call__(self, t: int, x, feedback_outputs, n_feedback: int = None):
        # Feedback first: outcomes drive the queue, outputs drive the
        # controller replica whose controls let us recover the disturbance.
        if n_feedback is None:
            n_feedback = len(feedback_outputs)
        while self._n_feedback_seen < n_feedback:
            b = feedback_outputs[self._n_feedback_seen]
            s = self._n_feedback_seen
            self.enc.learn_outcome(b is not ERASURE)
            self._prev_u = self.replica(s, b)
            self._n_feedback_seen += 1
        if t > 0:
            w_rec = x - self.cfg["lam"] * self._prev_x - self._prev_u
            self.vobs.absorb(w_rec)
        self._prev_x = x
        cell, r = self.vobs.emit()
        self.true_cells.append(cell)
        self.enc.push([1 if (cell >> k) & 1 else -1 for k in range(r)])
        return self.enc.channel_input(t)


class FeedbackController:
    """'C': decodes packets, re-estimates virtual controls, actuates."""

    def __init__(self, pair_cfg):
        c = pair_cfg
        self.cfg = c
        self.dec = RetransmitDecoder(c["bits_per_packet"], c["arrived_by"],
                                     default_bit=c.get("default_bit", 1))
        provider = StepCellProvider(
            c["lam"], c["omega"], c["rate"], self.dec,
            schedule=c["make_schedule"](),
            initial_width=c.get("initial_width", 0), exact=c["exact"],
            default_bit=c.get("default_bit", 1),
        )
        self.models = ControllerInternalModels(
            provider, gain=provider.lam, v=c.get("v", 0), exact=c["exact"],
            track_absolute=c.get("track_absolute", False),
        )

    def __call__(self, t: int, b):
        self.dec.observe(t, b)
        self.models.push_view(self.dec.finalized_count)
        return self.models.act(t)

    def error_depth(self, t: int, true_cells) -> int:
        """Steps since every estimate used for the last action was right."""
        m = self.models.oldest_mismatch(t, true_cells)
        return 0 if m is None else t + 1 - m


def make_feedback_pair(lam, omega, rate, bits_per_packet: int, delta=None,
                       v: int = 0, exact: bool = False, default_bit: int = 1,
                       initial_width=0, track_absolute: bool = False,
                       width_kind: str = None):
    """Factories for the sufficiency pair; both ends share the schedule.

    The returned observer and controller are black-box callables matching
    the reduction interface: ``observer(t, x, feedback)`` -> channel input,
    ``controller(t, b)`` -> control.  Exact mode defaults to the stationary
    width cycle (fixed denominators); float mode to the from-zero
    recursion.
    """
    r_frac = rate if isinstance(rate, Fraction) else Fraction(str(rate))
    if width_kind is None:
        width_kind = "cycle" if (exact and not initial_width) else "recursion"

    def arrived_by(t: int) -> int:
        return int(r_frac * (t + 1))

    def make_schedule() -> WidthSchedule:
        return WidthSchedule(lam, omega, r_frac, kind=width_kind,
                             initial_width=initial_width, exact=exact)

    cfg = dict(
        lam=lam, omega=omega, rate=r_frac, bits_per_packet=bits_per_packet,
        delta=delta, v=v, exact=exact, default_bit=default_bit,
        initial_width=initial_width, arrived_by=arrived_by,
        track_absolute=track_absolute, make_schedule=make_schedule,
    )

    def controller_factory() -> FeedbackController:
        return FeedbackController(cfg)

    def observer_factory() -> FeedbackObserver:
        return FeedbackObserver(cfg, controller_replica=controller_factory())

    return observer_factory, controller_factory


# ---------------------------------------------------------------------------
# Closed loop driver
# ---------------------------------------------------------------------------


@dataclass
class LoopResult:
    states: np.ndarray           # (trials, horizon + 1)
    depths: np.ndarray           # (trials, horizon + 1) instrumented d_t
    tables: list                 # per-trial AnytimeEstimateTable (symbol level)
    width_sup: float             # sup of the certainty-window orbit
    bound_constant: float        # 2 * width_sup / (1 - 1/lam)

    def pathwise_bound(self, lam: float) -> np.ndarray:
        return self.bound_constant * lam**self.depths.astype(float)


def closed_loop_run(plant_params, erasure_delta: float, rate,
                    bits_per_packet: int, horizon: int, trials: int,
                    seed: int = 0, v: int = 0, exact: bool = False,
                    delta=None, disturbance: str = "iid-uniform",
                    keep_tables: bool = True, trial_offset: int = 0,
                    gamma_ctrl: float = 0.0) -> LoopResult:
    """Monte Carlo of the erasure-channel feedback loop.

    Each trial owns its plant, channel session, observer and controller;
    the instrumented depth d_t (age of the oldest wrong virtual-control
    estimate used for the latest action) is recorded so the pathwise bound
    ``|X_t| <= lam**(d_t) * 2 * Delta_sup / (1 - 1/lam)`` can be asserted.

    ``gamma_ctrl > 0`` applies boundedly noisy controls; the loop is then
    built for the widened contract omega + gamma_ctrl, under which every
    invariant holds verbatim.
    """
    lam = plant_params.lam
    omega = plant_params.omega + gamma_ctrl
    if float(rate if not isinstance(rate, str) else Fraction(rate)) <= math.log2(float(lam)):
        raise ValueError(
            "rate <= log2(lam): stabilization generically impossible below "
            "the plant's intrinsic rate"
        )
    if not exact and horizon > float_horizon_limit(lam):
        raise ValueError(
            f"horizon {horizon} exceeds the float fidelity limit "
            f"{float_horizon_limit(lam)} for lam={lam}; use exact=True "
            "(double precision cannot cancel the lam**t tracking terms)"
        )
    obs_f, ctl_f = make_feedback_pair(
        Fraction(lam) if exact else lam,
        Fraction(omega) if exact else omega,
        rate, bits_per_packet, delta=delta, v=v, exact=exact,
    )
    states = np.zeros((trials, horizon + 1))
    depths = np.zeros((trials, horizon + 1), dtype=np.int64)
    tables = []
    width_sup = 0.0
    spec = ErasureSpec(delta=erasure_delta, kind="packet", bits=bits_per_packet)
    for idx in range(trials):
        trial = trial_offset + idx  # absolute index keys every RNG stream
        session = ChannelSession(spec, seed=seed, trial=trial,
                                 feedback_mode="noiseless-unit-delay",
                                 log_inputs=False)
        gen = rngmod.stream(seed, trial, "loop-disturbance")
        O = obs_f()
        C = ctl_f()
        table = AnytimeEstimateTable(rate=1) if keep_tables else None
        x = Fraction(0) if exact else 0.0
        lam_x = Fraction(lam) if exact else float(lam)
        half = (Fraction(plant_params.omega) / 2 if exact
                else plant_params.omega / 2)
        c_half = gamma_ctrl / 2
        outputs = session.outputs
        for t in range(horizon):
            a = O(t, x, outputs, t)  # unit-delay feedback: outputs 0..t-1
            b = channel_step(session, a)
            u = C(t, b)
            m = C.models.oldest_mismatch(t, O.true_cells)
            depths[idx, t + 1] = 0 if m is None else t + 1 - m
            if table is not None:
                table.record_oldest_wrong(t, m)
            if disturbance == "iid-uniform":
                if exact:
                    w = Fraction(int(gen.integers(0, 2**53)), 2**53) * 2 * half - half
                else:
                    w = gen.uniform(-half, half)
            elif disturbance == "two-point":
                w = half if gen.random() < 0.5 else -half
            else:
                raise ValueError(f"unknown disturbance {disturbance!r}")
            if gamma_ctrl:
                u = u + gen.uniform(-c_half, c_half)
            x = lam_x * x + u + w
            states[idx, t + 1] = float(x)
        width_sup = max(width_sup, float(O.vobs.max_width))
        if table is not None:
            tables.append(table)
    bound_c = 2.0 * width_sup / (1.0 - 1.0 / float(lam))
    return LoopResult(states=states, depths=depths, tables=tables,
                      width_sup=width_sup, bound_constant=bound_c)
