"""Half-overlapping lattice quantizer and trellis ML decoding over its bins.

Bin j spans ``(delta*j/2, delta*j/2 + delta]``: width delta, spacing
delta/2, so consecutive bins overlap by half.  An input is assigned to the
bin whose central half contains it, which tolerates observation noise up
to ``gamma < delta/2`` while guaranteeing the selected bin contains the
true state.

For stabilization without feedback, bins are labeled with iid random
channel-input blocks (regenerated from a shared seed on both sides) and
the controller runs maximum-likelihood dynamic programming over the
trellis of reachable bins.  Labels depend only on (stage, bin), so the DP
over bins is exactly ML over paths.
"""

from dataclasses import dataclass
import hashlib
import math
from typing import Optional

import numpy as np

from anyloop.channels import DmcSpec

__all__ = [
    "LatticeQuantizer",
    "Trellis",
    "lattice_assign",
    "assign_half_overlap",
    "bin_interval",
    "bin_center",
    "bins_intersecting",
    "reachable_constant",
    "reachable_count_bound",
    "trellis_extend",
    "trellis_control",
    "depth_moment_series",
]


def assign_half_overlap(x: float, delta) -> int:
    """Bin whose central half ``(delta*(j/2+1/4), delta*(j/2+3/4)]`` holds x."""
    return math.ceil(2 * x / delta - 0.5) - 1


def bin_interval(j: int, delta):
    return (delta * j / 2, delta * j / 2 + delta)


def bin_center(j: int, delta):
    return delta * j / 2 + delta / 2


def bins_intersecting(lo: float, hi: float, delta) -> range:
    """All bins whose (open-left] span meets [lo, hi]."""
    j_lo = math.floor(2 * lo / delta) - 2
    while bin_interval(j_lo, delta)[1] < lo:
        j_lo += 1
    j_hi = math.ceil(2 * hi / delta)
    while bin_interval(j_hi, delta)[0] >= hi:
        j_hi -= 1
    return range(j_lo, j_hi + 1)


def reachable_constant(lam: float, delta: float, omega: float) -> float:
    """K with: a bin's n-step descendants span at most K * lam**n bins."""
    if lam <= 1:
        raise ValueError("reachable-set bound needs lam > 1")
    return 4 + 2 * omega / (delta * (lam - 1))


def reachable_count_bound(lam: float, n: int, delta: float, omega: float) -> float:
    """Cardinality bound 2 + lam**n * (2 + 2*omega/(delta*(lam-1))).

    Counting half-overlapping bins against a real-valued interval length,
    adversarial endpoint alignment can admit one extra bin beyond this
    formula, so integer comparisons should allow a +1 slack; the
    label-uniqueness margin in ``minimal_block_length`` carries it.
    """
    if lam <= 1:
        raise ValueError("reachable-set bound needs lam > 1")
    return 2 + lam**n * (2 + 2 * omega / (delta * (lam - 1)))


@dataclass
class LatticeQuantizer:
    """Quantizer with either periodic (mod L) or iid random block labels.

    Random labels are drawn lazily by keying a counter-based generator with
    (seed, stage, bin): the unbounded bin index space never materializes,
    and observer and controller regenerate identical labels from the shared
    seed.
    """

    delta: float
    labeling: str = "regular"          # "regular" | "random"
    modulus: int = 0                   # L, for regular labels
    block: int = 1                     # n, symbols per label
    seed: int = 0
    q: Optional[np.ndarray] = None     # label distribution over channel inputs
    gamma: float = 0.0                 # tolerated observation noise bound

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.labeling not in ("regular", "random"):
            raise ValueError(f"unknown labeling {self.labeling!r}")
        if self.labeling == "regular" and self.modulus < 1:
            raise ValueError("regular labeling needs modulus L >= 1")
        if self.labeling == "random":
            if self.q is None:
                raise ValueError("random labeling needs a label distribution q")
            self.q = np.asarray(self.q, dtype=float)
            self._cum_q = np.cumsum(self.q)[:-1]
        self._cache = {}

    def assign(self, x_noisy: float) -> int:
        if self.delta <= 2 * self.gamma:
            raise ValueError("containment needs delta > 2 * gamma")
        return assign_half_overlap(x_noisy, self.delta)

    def label(self, stage: int, j: int):
        """Label of bin j at the given stage.

        Random labels hash (seed, stage, bin) into iid draws from q via
        inverse-CDF on 16-bit digest slices; the unbounded bin space never
        materializes and both loop ends regenerate identical labels.
        """
        if self.labeling == "regular":
            return j % self.modulus
        key = (stage, j)
        got = self._cache.get(key)
        if got is None:
            cum = self._cum_q
            h = hashlib.sha256()
            h.update(self.seed.to_bytes(8, "little", signed=True))
            h.update(stage.to_bytes(8, "little", signed=True))
            h.update(j.to_bytes(8, "little", signed=True))
            digest = b""
            while len(digest) < 2 * self.block:
                digest += h.digest()
                h.update(b"x")
            got = tuple(
                int(np.searchsorted(cum, int.from_bytes(digest[2 * i:2 * i + 2], "little") / 65536.0, side="right"))
                for i in range(self.block)
            )
            self._cache[key] = got
        return got


def lattice_assign(x_noisy: float, q: LatticeQuantizer) -> int:
    """Bin index for a noisy observation; contains the true state when
    |noise| < gamma/2 and delta > 2*gamma."""
    return q.assign(x_noisy)


@dataclass
class Trellis:
    """Per-stage reachable bins with best log-likelihood and backpointers.

    ``scores`` maps bin -> accumulated log2-likelihood of the best path
    ending there; ``parents`` lets the ML path be traced back.  Bins are
    clipped to the ``max_states`` best scores per stage; a drop whose score
    came within ``guard_margin`` of the stage best is counted separately
    because only those could ever have changed the ML path.
    """

    quantizer: LatticeQuantizer
    channel: DmcSpec
    lam: float
    omega: float
    root_bin: int
    max_states: int = 0          # 0 = unlimited
    guard_margin: float = 30.0   # log2-likelihood units

    def __post_init__(self):
        self.stage = 0
        self.scores = {self.root_bin: 0.0}
        self.parents = [{self.root_bin: None}]
        self.n_clipped = 0
        self.n_guard_hits = 0
        self._logp = np.full_like(self.channel.matrix, -np.inf)
        np.log2(self.channel.matrix, out=self._logp, where=self.channel.matrix > 0)

    def reachable(self, j: int, control: float) -> range:
        """Bins bin j can lead to after `block` steps under a known control."""
        n = self.quantizer.block
        lam_n = self.lam**n
        spread = self.omega / 2 * (lam_n - 1) / (self.lam - 1)
        lo, hi = bin_interval(j, self.quantizer.delta)
        return bins_intersecting(
            lam_n * lo + control - spread,
            lam_n * hi + control + spread,
            self.quantizer.delta,
        )

    def block_loglik(self, stage: int, j: int, received_block) -> float:
        label = self.quantizer.label(stage, j)
        return float(sum(self._logp[a, b] for a, b in zip(label, received_block)))

    def ml_bin(self) -> int:
        return max(self.scores, key=lambda j: (self.scores[j], -abs(j), j))

    def ml_path(self) -> list:
        path = [self.ml_bin()]
        for stage in range(self.stage, 0, -1):
            path.append(self.parents[stage][path[-1]])
        path.reverse()
        return path


def trellis_extend(tr: Trellis, received_block, control: float) -> int:
    """DP update for one more observation block; returns the new ML bin.

    ``control`` is the translation applied to the state during the block
    (known exactly at the controller, which issued it).
    """
    nxt: dict = {}
    parent: dict = {}
    for j, score in tr.scores.items():
        for j2 in tr.reachable(j, control):
            if score > nxt.get(j2, -np.inf):
                nxt[j2] = score
                parent[j2] = j
    stage = tr.stage + 1
    for j2 in nxt:
        nxt[j2] += tr.block_loglik(stage, j2, received_block)
    if tr.max_states and len(nxt) > tr.max_states:
        order = sorted(nxt, key=lambda j: nxt[j], reverse=True)
        best = nxt[order[0]]
        for j2 in order[tr.max_states:]:
            tr.n_clipped += 1
            if best - nxt[j2] < tr.guard_margin:
                tr.n_guard_hits += 1
            del nxt[j2]
            del parent[j2]
    tr.scores = nxt
    tr.parents.append(parent)
    tr.stage = stage
    return tr.ml_bin()


def trellis_control(ml_bin: int, lam: float, n: int, delta: float) -> float:
    """Control driving the ML bin's center to zero over the next block."""
    return -(lam**n) * bin_center(ml_bin, delta)


def depth_moment_series(exponent_bits: float, n: int, lam: float, eta: float,
                        k_prime: float, d_max: int = 10_000):
    """Partial sums of sum_d 2**(-d n Er) * (K' lam**((d+1) n))**eta.

    Converges iff Er > eta * log2(lam); the caller can check the tail is
    vanishing by comparing the last increments.
    """
    d = np.arange(d_max + 1)
    terms = 2.0 ** (-d * n * exponent_bits) * (k_prime * lam ** ((d + 1) * n)) ** eta
    return np.cumsum(terms)


def minimal_block_length(lam: float, rate: float, delta: float, omega: float,
                         n_max: int = 64) -> int:
    """Smallest n with 2**(n*rate) > K * lam**n (label-uniqueness margin)."""
    k = reachable_constant(lam, delta, omega)
    for n in range(1, n_max + 1):
        if 2.0 ** (n * rate) > k * lam**n + 1:
            return n
    raise ValueError("no block length up to n_max satisfies 2**(nR) > K lam**n")


@dataclass
class TrellisRunResult:
    block_states: np.ndarray     # (trials, blocks + 1) states at block ends
    depths: np.ndarray           # (trials, blocks) ML-vs-true divergence depth
    true_bins: np.ndarray        # (trials, blocks)
    ml_bins: np.ndarray          # (trials, blocks)
    k_const: float
    k_prime: float
    n: int
    n_clipped: int
    n_guard_hits: int
    bound_violations: int        # pathwise |X_(k+1)n| <= K' lam**((d+1)n)


def run_trellis_loop(channel: DmcSpec, q_labels, lam: float, omega: float,
                     delta: float, gamma: float, n: int, horizon: int,
                     trials: int, seed: int = 0, max_states: int = 256,
                     rate_check: float = None) -> TrellisRunResult:
    """Closed loop of the randomly-labeled quantizer + trellis ML controller.

    The observer samples the (noisily observed) state every n steps, sends
    the current bin's random label over n channel uses; the controller
    extends the ML trellis with each received block and drives the ML
    bin's center toward zero.  Per block the divergence depth between the
    ML path and the true bin path is recorded, together with the pathwise
    check ``|X_(k+1)n| <= K' * lam**((d+1)n)``.
    """
    from anyloop import rng as _rng
    from anyloop.channels import ChannelSession, channel_step

    if rate_check is not None:
        if 2.0 ** (n * rate_check) <= reachable_constant(lam, delta, omega) * lam**n + 1:
            raise ValueError("2**(nR) > K*lam**n violated: labels cannot be unique")
    blocks = horizon // n
    k_const = reachable_constant(lam, delta, omega)
    k_prime = 2 * delta * k_const
    states = np.zeros((trials, blocks + 1))
    depths = np.zeros((trials, blocks), dtype=np.int64)
    true_bins = np.zeros((trials, blocks), dtype=np.int64)
    ml_bins = np.zeros((trials, blocks), dtype=np.int64)
    clipped = guard = violations = dropped_truth = 0
    for trial in range(trials):
        quant = LatticeQuantizer(delta=delta, labeling="random", block=n,
                                 seed=_rng.derive_key(seed, trial, "labels") % (2**63),
                                 q=q_labels, gamma=gamma)
        session = ChannelSession(channel, seed=seed, trial=trial, log_inputs=False)
        wgen = _rng.stream(seed, trial, "trellis-w")
        ngen = _rng.stream(seed, trial, "trellis-noise")
        root = assign_half_overlap(0.0, delta)
        tr = Trellis(quantizer=quant, channel=channel, lam=lam, omega=omega,
                     root_bin=root, max_states=max_states)
        x = 0.0
        true_path = [root]
        prev_u = 0.0   # control during the previous block (the translation)
        for k in range(blocks):
            # stage-k sample: bin of X_{kn} (stage 0 is the known root)
            if k > 0:
                x_noisy = x + (ngen.uniform(-gamma / 2, gamma / 2) if gamma else 0.0)
                true_path.append(quant.assign(x_noisy))
            label = quant.label(k, true_path[k])
            received = []
            translation = prev_u
            for i in range(n):
                b = channel_step(session, label[i])
                received.append(b)
                u = 0.0
                if i == n - 1:
                    if k > 0:
                        ml = trellis_extend(tr, received, translation)
                    else:
                        ml = root  # stage 0 carries no information
                    path = tr.ml_path()
                    d = len(true_path)
                    for back in range(len(true_path)):
                        if path[-1 - back] == true_path[-1 - back]:
                            d = back
                            break
                    depths[trial, k] = d
                    true_bins[trial, k] = true_path[-1]
                    ml_bins[trial, k] = ml
                    if true_path[-1] not in tr.scores:
                        dropped_truth += 1
                    u = trellis_control(ml, lam, n, delta)
                    prev_u = u
                w = wgen.uniform(-omega / 2, omega / 2)
                x = lam * x + u + w
            states[trial, k + 1] = x
            d = depths[trial, k]
            if abs(x) > k_prime * lam ** ((d + 1) * n) * (1 + 1e-9):
                violations += 1
        clipped += tr.n_clipped
        guard += tr.n_guard_hits
    return TrellisRunResult(block_states=states, depths=depths,
                            true_bins=true_bins, ml_bins=ml_bins,
                            k_const=k_const, k_prime=k_prime, n=n,
                            n_clipped=clipped, n_guard_hits=guard + dropped_truth,
                            bound_violations=violations)
