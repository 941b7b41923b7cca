"""Turning a stabilizer into a communication system.

Message bits are folded into the simulated plant's disturbances so the
disturbance-driven state traces a point on a Cantor set; distinct
prefixes separate by gaps that grow like lam**(t - i/R), so a threshold
scan recovers every bit whose gap has outgrown the tracking error.  Here
the black box is the memoryless pair from the noiseless-bit demo, and the
decoder's mistakes are literally large-state events.
"""

from fractions import Fraction

import numpy as np

from anyloop.cantor import BitStream, CantorCodecParams
from anyloop.channels import ChannelSession, noiseless_bit_channel
from anyloop.reduction import example1_pair, reduction_build
from anyloop.reliability import estimate_reliability
from anyloop import rng

params = CantorCodecParams(Fraction(3, 2), 1, Fraction(1, 2), mode="exact")
print(f"eps1 = {params.epsilon1}, gamma = {params.gamma}, "
      f"|W| bound = {params.w_bound()} (= omega/2)")

obs_f, ctl_f = example1_pair(1.5, exact=True)
red = reduction_build(obs_f, ctl_f, params)

tables = []
horizon = 60
for trial in range(200):
    sess = ChannelSession(noiseless_bit_channel(), seed=1, trial=trial,
                          feedback_mode="noiseless-unit-delay")
    gen = rng.stream(1, trial, "bits")
    stream = BitStream(params.rate,
                       gen.choice((-1, 1), size=params.n_bits_at(horizon) + 1))
    res = red.run_trial(sess, stream, horizon)
    assert res.containment_violations == 0
    tables.append(res.table)

rep = estimate_reliability(tables, d_grid=np.arange(0, 16))
print(f"\n{'delay':>6} {'g_hat':>9}")
for d, g in zip(rep.delays, rep.g_hat):
    print(f"{int(d):>6} {g:>9.5f}")
d_star = red.guaranteed_error_free_delay(2.0)
print(f"\n|X| <= 2 forces zero errors at delay >= {d_star}; observed max "
      f"error delay: {max((x for t in tables for x in t.error_delays if np.isfinite(x)), default=None)}")
