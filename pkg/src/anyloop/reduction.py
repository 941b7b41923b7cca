"""Anytime encoder/decoder built from a black-box stabilizing pair.

The pair (observer O, controller C) is wrapped around a simulated plant
whose disturbances carry the message bits.  The simulated state splits as
``X = Xv + Xt``: ``Xv`` is driven only by the encoded disturbances, ``Xt``
only by the controls.  Noiseless unit-delay channel-output feedback lets
the encoder run both O and C; the decoder runs its own copy of C, rebuilds
``Xt`` by pushing the controls through an undisturbed plant model, and
extracts every past bit from ``-Xt`` with the threshold scan.

Whenever an extracted prefix is wrong through bit j at decode time tau,
the simulated state must satisfy ``|X_tau| >= lam**(tau - j/R) * gamma *
eps1 / (1 + eps1)`` -- decoding errors are literally large-state events,
which is what turns a stability bound into an anytime reliability bound.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from anyloop.cantor import BitStream, CantorCodecParams, CantorEncoder, extract_bits
from anyloop.channels import ChannelSession, channel_step
from anyloop.reliability import AnytimeEstimateTable

__all__ = ["reduction_build", "Reduction", "ReductionTrialResult", "example1_pair"]


@dataclass
class ReductionTrialResult:
    table: AnytimeEstimateTable
    n_steps: int
    containment_checks: int
    containment_violations: int
    max_abs_state: float
    states: Optional[np.ndarray] = None  # |X_tau|, kept on request
    channel_inputs: Optional[list] = None


class Reduction:
    """One wired instance of the control-to-communication construction."""

    def __init__(self, observer_factory, controller_factory,
                 params: CantorCodecParams, controller_randomized: bool = False,
                 shared_seed: Optional[int] = None):
        if controller_randomized and shared_seed is None:
            raise ValueError(
                "a randomized controller needs common randomness: pass shared_seed"
            )
        self.observer_factory = observer_factory
        self.controller_factory = controller_factory
        self.params = params
        self.shared_seed = shared_seed

    def run_trial(self, session: ChannelSession, stream: BitStream, horizon: int,
                  keep_states: bool = False, keep_full_table: bool = False,
                  keep_inputs: bool = False) -> ReductionTrialResult:
        """Drive the construction for ``horizon`` channel uses.

        The decoder re-estimates all available bits after every use; each
        estimate row is checked on the spot against the error-containment
        inequality, so million-step runs need no trajectory storage.
        """
        if session.feedback_mode != "noiseless-unit-delay":
            raise ValueError("the reduction requires noiseless unit-delay feedback")
        p = self.params
        need = p.n_bits_at(horizon)
        if len(stream.bits) < need:
            raise ValueError(f"stream too short: need {need} bits for horizon {horizon}")
        if stream.rate != p.rate:
            raise ValueError("stream rate must match the codec rate")

        O = self.observer_factory()
        C_enc = self.controller_factory()
        C_dec = self.controller_factory()
        enc = CantorEncoder(p, stream)
        zero = Fraction(0) if p.mode == "exact" else 0.0
        x = enc.xv + zero          # simulated plant state (Xt_0 = 0)
        xt_dec = zero              # decoder's control-driven model
        lam = p.lam
        table = AnytimeEstimateTable(rate=p.rate, keep_full=keep_full_table)
        checks = violations = 0
        max_abs = 0.0
        states = [] if keep_states else None
        inputs = [] if keep_inputs else None
        outputs = session.outputs
        bits = stream.bits

        for t in range(horizon):
            a = O(t, x, outputs, t)
            if inputs is not None:
                inputs.append(a)
            b = channel_step(session, a)
            u = C_enc(t, b)
            u_dec = C_dec(t, b)
            if u != u_dec:
                raise AssertionError(
                    "controller copies diverged; is the controller randomized "
                    "without shared randomness?"
                )
            w = enc.step()
            x = lam * x + u + w
            xt_dec = lam * xt_dec + u_dec
            tau = t + 1
            n_bits = min(p.n_bits_at(tau), len(bits))
            est = extract_bits(p, -xt_dec, tau, n_bits=n_bits)
            truth = bits[:n_bits]
            wrong = np.nonzero(est != truth)[0]
            k_min = int(wrong[0]) if wrong.size else None
            if keep_full_table:
                table.record(tau, est, truth)
            else:
                table.record_oldest_wrong(tau, k_min)
            ax = abs(x)
            fax = float(ax)
            if fax > max_abs:
                max_abs = fax
            if states is not None:
                states.append(fax)
            if k_min is not None:
                checks += 1
                if ax < p.guarantee_radius(tau, k_min):
                    violations += 1
        return ReductionTrialResult(
            table=table, n_steps=horizon, containment_checks=checks,
            containment_violations=violations, max_abs_state=max_abs,
            states=np.asarray(states) if states is not None else None,
            channel_inputs=inputs,
        )

    def guaranteed_error_free_delay(self, state_sup: float) -> int:
        """Smallest integer delay at which errors are impossible whenever
        the wrapped loop keeps |X| <= state_sup."""
        p = self.params
        base = float(p.gamma * p.epsilon1 / (1 + p.epsilon1))
        d = 0
        while float(p.lam) ** d * base <= state_sup:
            d += 1
        return d


def reduction_build(observer_factory: Callable, controller_factory: Callable,
                    params: CantorCodecParams, controller_randomized: bool = False,
                    shared_seed: Optional[int] = None) -> Reduction:
    """Wire a black-box observer/controller pair into an anytime code.

    ``observer_factory()`` must return a callable ``(t, x, outputs,
    n_feedback) -> channel input`` and ``controller_factory()`` a callable
    ``(t, b) -> control``; fresh instances are created per trial and the
    two controller copies (encoder-side simulation and decoder) must be
    deterministic given the shared seed.
    """
    return Reduction(observer_factory, controller_factory, params,
                     controller_randomized=controller_randomized,
                     shared_seed=shared_seed)


def example1_pair(lam=1.5, exact: bool = False):
    """The memoryless sign-observer / bang-controller pair."""
    mag = Fraction(str(lam)) if exact else float(lam)

    def observer_factory():
        return lambda t, x, outputs, n: 1 if x > 0 else 0

    def controller_factory():
        return lambda t, b: -mag if b == 1 else mag

    return observer_factory, controller_factory
