"""Recovering channel-output feedback through the plant itself.

The controller delays its stabilizing term by one extra step, which makes
that term predictable at the observer, and adds a "move" ``F(b) = 3 *
gamma_u * index(b)`` announcing the newest channel output; the previous
move is cancelled by subtracting ``lam * F(b_prev)``.  Watching
``x_t - lam * x_{t-1}`` through bounded noise then reveals the move to
within ``gamma_u = omega + (lam + 1) * gamma_obs``, so the output index is
recovered exactly: the observer gains noiseless (unit-delay) channel
feedback without any feedback wire, at the price of a bounded state
perturbation that lasts one step.

The stabilizing layer is the blocked noisy-observation construction: the
virtual state is located every n steps inside half-overlapping bins of
width delta (containment tolerates |noise| < gamma/2 when delta > 2*gamma)
and the bin index is shipped through the queue/retransmit anytime code.

Everything here runs on exact dyadic rationals: an integer plant gain and
grid-rounded interval centers keep all quantities on a fixed lattice, so
million-step trials are exact and the "dance" run and its explicit-feedback
twin can be compared bitwise.
"""

from dataclasses import dataclass
from fractions import Fraction
import math
from typing import List

from anyloop.channels import ERASURE, ErasureSpec, ChannelSession, channel_step
from anyloop.lattice import assign_half_overlap, bin_interval, bins_intersecting
from anyloop.reliability import AnytimeEstimateTable
from anyloop.retransmit import RetransmitDecoder, RetransmitEncoder
from anyloop.stabilizer import ControllerInternalModels, _ValueProvider
from anyloop import rng as rngmod

__all__ = [
    "DanceConfig",
    "dance_encode_control",
    "dance_decode_output",
    "validate_output_tail",
    "erasure_output_index",
    "run_dance_loop",
    "DanceRunResult",
]


@dataclass(frozen=True)
class DanceConfig:
    """Move geometry for announcing channel outputs through the plant."""

    lam: Fraction
    omega: Fraction
    gamma_obs: Fraction

    @property
    def gamma_u(self) -> Fraction:
        """Effective noise bound on controls seen through noisy states."""
        return self.omega + (self.lam + 1) * self.gamma_obs

    @property
    def move_unit(self) -> Fraction:
        return 3 * self.gamma_u

    def move(self, b_index: int) -> Fraction:
        return self.move_unit * b_index


def dance_encode_control(intended_u, b_index: int, prev_b_index: int,
                         cfg: DanceConfig):
    """Applied control: intended + F(b) - lam * F(b_prev).

    The new move shifts the next state by ``F(b)``; the correction cancels
    the previous move's inherited ``lam * F(b_prev)``, so each move
    perturbs exactly one state.
    """
    return intended_u + cfg.move(b_index) - cfg.lam * cfg.move(prev_b_index)


def dance_decode_output(x_noisy_t, x_noisy_prev, predictable_u, cfg: DanceConfig) -> int:
    """Recover the output index from two noisy states and the predictable
    control component (stabilizing term minus the stale-move correction).

    Exact whenever |disturbance| <= omega/2 and |observation noise| <
    gamma_obs/2: the residual sits within gamma_u/2 < (3/2) gamma_u of the
    true move."""
    residual = (x_noisy_t - cfg.lam * x_noisy_prev) - predictable_u
    ratio = residual / cfg.move_unit
    if isinstance(ratio, Fraction):
        return int((2 * ratio + 1) // 2)  # floor(ratio + 1/2), exact
    return int(math.floor(ratio + 0.5))


def erasure_output_index(output, bits: int = 2) -> int:
    """Fixed bijection from packet-erasure outputs onto integers around 0.

    The erasure maps to 0 (no move); packet values split evenly to both
    sides, e.g. for 2-bit packets {0,1,ERASURE,2,3} -> {-2,-1,0,1,2}.
    """
    if output is ERASURE:
        return 0
    v = int(output)
    half = (1 << bits) // 2
    return v - half if v < half else v - half + 1


def erasure_output_from_index(idx: int, bits: int = 2):
    if idx == 0:
        return ERASURE
    half = (1 << bits) // 2
    return idx + half if idx < 0 else idx + half - 1


def validate_output_tail(index_probs: dict, k: float, beta: float, eta: float) -> bool:
    """Check P(|B| >= i) <= k * i**-beta with beta > eta for the channel's
    worst-case output law; precondition of the dance construction.

    ``index_probs`` maps output index -> max probability over inputs.
    """
    if beta <= eta:
        return False
    idxs = sorted(index_probs, key=abs, reverse=True)
    top = max(abs(i) for i in idxs) if idxs else 0
    for i in range(1, top + 1):
        tail = sum(p for j, p in index_probs.items() if abs(j) >= i)
        if tail > k * i ** (-beta):
            return False
    return True


# ---------------------------------------------------------------------------
# Blocked noisy-observation virtual observer
# ---------------------------------------------------------------------------


class BlockIntervalTracker:
    """Interval bookkeeping shared by the observer and (via symbols) the
    controller: where the virtual state is known to live at block ends.

    The virtual control recenters the interval; its center is rounded down
    to the grid so every endpoint stays on a fixed lattice.
    """

    def __init__(self, lam, omega, gamma, delta, n: int, grid):
        self.lam = Fraction(lam)
        if self.lam.denominator != 1 or self.lam <= 1:
            raise ValueError("blocked exact tracker needs an integer lam > 1")
        self.omega = Fraction(omega)
        self.gamma = Fraction(gamma)
        self.delta = Fraction(delta)
        if not self.delta > 2 * self.gamma:
            raise ValueError("needs delta > 2*gamma for bin containment")
        self.n = n
        self.grid = Fraction(grid)
        self.lam_n = self.lam**n
        self.omega_n = self.omega * (self.lam_n - 1) / (self.lam - 1)
        # Static symbol alphabet: every bin any reachable window can touch.
        pad = self.lam_n * self.grid
        half_w = (self.lam_n * self.delta + self.omega_n) / 2 + pad
        rng_bins = bins_intersecting(float(-half_w), float(half_w), float(self.delta))
        self.bin_offset = rng_bins.start
        self.alphabet = len(rng_bins)
        self.interval = (Fraction(0), Fraction(0))

    def ubar(self) -> Fraction:
        """Virtual control for the upcoming block: recenters the interval."""
        lo, hi = self.interval
        c = (lo + hi) / 2
        c_r = (c / self.grid).__floor__() * self.grid
        return -self.lam_n * c_r

    def window_after(self, ubar: Fraction):
        lo, hi = self.interval
        return (self.lam_n * lo + ubar - self.omega_n / 2,
                self.lam_n * hi + ubar + self.omega_n / 2)

    def advance_with_bin(self, ubar: Fraction, j: int):
        """Intersect the propagated window with the announced bin."""
        jlo, jhi = self.window_after(ubar)
        blo = self.delta * j / 2
        bhi = blo + self.delta
        lo, hi = max(jlo, blo), min(jhi, bhi)
        if lo > hi:  # impossible announcement (bad default estimate)
            mid = max(jlo, min(jhi, (blo + bhi) / 2))
            lo = hi = mid
        self.interval = (lo, hi)

    def symbol_of_bin(self, j: int) -> int:
        s = j - self.bin_offset
        if not 0 <= s < self.alphabet:
            raise AssertionError("bin outside the static alphabet window")
        return s

    def bin_of_symbol(self, s: int) -> int:
        return s + self.bin_offset


class BlockReplayProvider(_ValueProvider):
    """Virtual-control estimates for the blocked construction.

    Symbol k (k >= 1) is the bin announced at block k.  Values come from
    replaying the interval tracker over the estimated symbol prefix: the
    finalized prefix is cached, the pending suffix (defaults) is re-derived
    each action, so late corrections re-propagate exactly.
    """

    def __init__(self, make_tracker, bits_per_block: int,
                 decoder: RetransmitDecoder, default_bit: int = 1):
        self.make_tracker = make_tracker
        self.bpb = bits_per_block
        self.decoder = decoder
        self.default_bit = default_bit
        t = make_tracker()
        self._final_tracker = t
        self._final_values: List[Fraction] = [t.ubar()]  # value(0) = 0 shift
        self._final_tracker_applied = 0  # symbols folded into _final_tracker
        self._suffix_vals: dict = {}
        self._suffix_for: tuple = (-1, -1)
        self.default_symbol_abs_bin = -1  # bin containing 0

    def first_pending_symbol(self, view_f: int) -> int:
        return view_f // self.bpb + 1

    def est_symbol(self, i: int, view_f: int) -> int:
        if i == 0:
            return 0
        base = (i - 1) * self.bpb
        if base + self.bpb <= view_f:
            s = 0
            for k in range(self.bpb):
                if self.decoder.decoded[base + k] == 1:
                    s |= 1 << k
            return s
        t = self._final_tracker  # any tracker knows the static geometry
        return t.symbol_of_bin(self.default_symbol_abs_bin)

    def _advance(self, tracker, sym: int):
        # The window for symbol k was built with the recentering of the
        # previous interval; the value of symbol k is the recentering of
        # the new (intersected) interval.
        ub_pre = tracker.ubar()
        tracker.advance_with_bin(ub_pre, tracker.bin_of_symbol(sym))
        return tracker.ubar()

    def prepare(self, view_f: int, upto: int):
        p = view_f // self.bpb  # fully finalized symbols
        while self._final_tracker_applied < p:
            i = self._final_tracker_applied + 1
            sym = self.est_symbol(i, view_f)
            self._final_values.append(self._advance(self._final_tracker, sym))
            self._final_tracker_applied = i
        if self._suffix_for != (view_f, upto):
            scratch = self.make_tracker()
            scratch.interval = self._final_tracker.interval
            vals = {}
            for i in range(self._final_tracker_applied + 1, upto + 1):
                vals[i] = self._advance(scratch, self.est_symbol(i, view_f))
            self._suffix_vals = vals
            self._suffix_for = (view_f, upto)

    def value(self, i: int, view_f: int):
        if i < len(self._final_values):
            return self._final_values[i]
        if i in self._suffix_vals:
            return self._suffix_vals[i]
        # value under an older view (backfill); replay defaults
        scratch = self.make_tracker()
        scratch.interval = self._final_tracker.interval
        out = None
        for j in range(self._final_tracker_applied + 1, i + 1):
            out = self._advance(scratch, self.est_symbol(j, view_f))
        return out

    def changed_since(self, f_prev: int, f_cur: int, upto: int):
        if f_cur // self.bpb == f_prev // self.bpb:
            return []
        return list(range(f_prev // self.bpb + 1, upto + 1))


# ---------------------------------------------------------------------------
# Blocked controller and the full loop
# ---------------------------------------------------------------------------


class BlockedStabController:
    """Stabilizing layer of the dance loop: acts once per block.

    ``pre_observe_control(t)`` must be called before ``observe(t, b)``;
    computing the action from the pre-observation decoder state is the
    paper's one-extra-step artificial delay, and is what lets the observer
    predict the stabilizing term exactly.
    """

    def __init__(self, make_tracker, n: int, bits_per_block: int, arrived_by,
                 packet_bits: int, default_bit: int = 1):
        self.n = n
        self.dec = RetransmitDecoder(packet_bits, arrived_by, default_bit=default_bit)
        self.provider = BlockReplayProvider(make_tracker, bits_per_block, self.dec,
                                            default_bit=default_bit)
        tracker = make_tracker()
        self.models = ControllerInternalModels(self.provider, gain=tracker.lam_n,
                                               exact=True)

    def pre_observe_control(self, t: int):
        if t % self.n != self.n - 1:
            return Fraction(0)
        k = t // self.n  # freshest announced symbol
        return self.models.act(k, view_f=self.dec.finalized_count)

    def observe(self, t: int, b):
        self.dec.observe(t, b)


@dataclass
class DanceRunResult:
    horizon: int
    n_decodes: int
    n_decode_errors: int
    true_symbols: List[int]
    decoded_outputs: List[int]      # recovered output indexes, per step
    true_outputs: List[int]         # actual output indexes, per step
    max_abs_state: float
    max_abs_xbar: float
    symbol_table: AnytimeEstimateTable
    residuals: List[float] = None   # decode residuals, when kept

    @property
    def zero_error(self) -> bool:
        return self.n_decode_errors == 0


def run_dance_loop(horizon: int, seed: int, trial: int = 0,
                   lam: int = 2, omega=Fraction(1, 4), gamma=Fraction(1, 4),
                   delta=Fraction(1), n: int = 8, erasure_delta: float = 0.25,
                   packet_bits: int = 2, grid=Fraction(1, 1024),
                   explicit_feedback: bool = False,
                   keep_residuals: bool = False) -> DanceRunResult:
    """One exact trial of the no-feedback-wire loop (or its feedback twin).

    With ``explicit_feedback=True`` the observer reads the channel outputs
    from the (unit-delay) feedback log instead of decoding the plant's
    moves, and the controller applies no moves; driven by the same seed,
    the two runs must produce bitwise-identical virtual symbol streams.
    """
    lam = Fraction(lam)
    cfg = DanceConfig(lam=lam, omega=Fraction(omega), gamma_obs=Fraction(gamma))

    def make_tracker() -> BlockIntervalTracker:
        return BlockIntervalTracker(lam, omega, gamma, delta, n, grid)

    geom = make_tracker()
    bpb = max(1, math.ceil(math.log2(geom.alphabet)))

    def arrived_by(t: int) -> int:
        return bpb * (t // n)

    spec = ErasureSpec(delta=erasure_delta, kind="packet", bits=packet_bits)
    session = ChannelSession(spec, seed=seed, trial=trial,
                             feedback_mode="noiseless-unit-delay",
                             log_inputs=False)
    w_gen = rngmod.stream(seed, trial, "dance-w")
    n_gen = rngmod.stream(seed, trial, "dance-noise")

    enc = RetransmitEncoder(packet_bits, arrived_by)
    real = BlockedStabController(make_tracker, n, bpb, arrived_by, packet_bits)
    replica = BlockedStabController(make_tracker, n, bpb, arrived_by, packet_bits)
    obs_tracker = make_tracker()

    if bpb / n >= packet_bits * (1 - erasure_delta):
        raise ValueError(
            f"virtual-symbol rate {bpb}/{n} exceeds the channel's "
            f"{packet_bits * (1 - erasure_delta)} bits/use; the queue diverges"
        )
    zero = Fraction(0)
    x = zero
    xbar = zero
    pending_ubar = obs_tracker.ubar()  # block 0: interval (0,0) -> 0
    w_block = zero
    x_noisy_prev = None
    x_noisy_cur = zero   # x_0 = 0, N_0 = 0 (known initial state)
    cur_noise = zero
    prev_b_idx = 0       # F(b_{-1}) = 0
    prev_prev_b_idx = 0
    true_symbols: List[int] = []
    decoded_idx: List[int] = []
    true_idx: List[int] = []
    residuals: List[float] = [] if keep_residuals else None
    table = AnytimeEstimateTable(rate=1)
    n_err = 0
    max_x = 0.0
    max_xbar = 0.0

    def draw_w():
        return (Fraction(int(w_gen.integers(0, 2**20 + 1)), 2**20) - Fraction(1, 2)) * Fraction(omega)

    def draw_noise():
        # strictly inside (-gamma/2, gamma/2)
        k = int(n_gen.integers(0, 2**20))
        return (Fraction(2 * k + 1, 2**21) - Fraction(1, 2)) * Fraction(gamma) * Fraction(1023, 1024)

    for t in range(horizon):
        # --- observer: learn output t-1, then sample at block boundaries
        if t >= 1:
            s = t - 1
            if explicit_feedback:
                b_prev = session.outputs[s]
                idx = erasure_output_index(b_prev, packet_bits)
            else:
                u_stab_prev = replica.pre_observe_control(s)
                predict = u_stab_prev - lam * cfg.move(prev_prev_b_idx)
                if residuals is not None:
                    residuals.append(float(
                        (x_noisy_cur - cfg.lam * x_noisy_prev) - predict))
                idx = dance_decode_output(x_noisy_cur, x_noisy_prev, predict, cfg)
                b_prev = erasure_output_from_index(idx, packet_bits)
                replica.observe(s, b_prev)
            decoded_idx.append(idx)
            enc.learn_outcome(b_prev is not ERASURE)
        if t % n == 0 and t > 0:
            k = t // n
            y = xbar + cur_noise  # the step's one noisy look, minus controls
            j = assign_half_overlap(y, obs_tracker.delta)
            blo, bhi = bin_interval(j, obs_tracker.delta)
            assert blo < xbar <= bhi, "containment of the true virtual state failed"
            ub_pre = obs_tracker.ubar()
            obs_tracker.advance_with_bin(ub_pre, j)
            ilo, ihi = obs_tracker.interval
            assert ilo <= xbar <= ihi, "interval bookkeeping lost the virtual state"
            pending_ubar = obs_tracker.ubar()
            sym = obs_tracker.symbol_of_bin(j)
            true_symbols.append(sym)
            enc.push([1 if (sym >> i) & 1 else -1 for i in range(bpb)])
            m = real.models.oldest_mismatch(k - 1, [0] + true_symbols[:-1]) if k > 1 else None
            table.record_oldest_wrong(k - 1, m)
        # --- channel use
        a = enc.channel_input(t)
        b = channel_step(session, a)
        b_idx = erasure_output_index(b, packet_bits)
        true_idx.append(b_idx)
        # --- controller (stab term predates the fresh output)
        u_stab = real.pre_observe_control(t)
        real.observe(t, b)
        if explicit_feedback:
            u = u_stab
        else:
            u = dance_encode_control(u_stab, b_idx, prev_b_idx, cfg)
        # --- plant and bookkeeping
        w = draw_w()
        x = lam * x + u + w
        fx = abs(float(x))
        if fx > max_x:
            max_x = fx
        w_block = lam * w_block + w if t % n else w
        if (t + 1) % n == 0:
            xbar = obs_tracker.lam_n * xbar + w_block + pending_ubar
            w_block = zero
            fb = abs(float(xbar))
            if fb > max_xbar:
                max_xbar = fb
        x_noisy_prev = x_noisy_cur
        cur_noise = draw_noise()
        x_noisy_cur = x + cur_noise
        prev_prev_b_idx = prev_b_idx
        prev_b_idx = b_idx

    n_decodes = 0
    if not explicit_feedback:
        n_decodes = len(decoded_idx)
        n_err = sum(1 for a_, b_ in zip(decoded_idx, true_idx) if a_ != b_)
    return DanceRunResult(
        horizon=horizon, n_decodes=n_decodes, n_decode_errors=n_err,
        true_symbols=true_symbols, decoded_outputs=decoded_idx,
        true_outputs=true_idx, max_abs_state=max_x, max_abs_xbar=max_xbar,
        symbol_table=table, residuals=residuals,
    )
