"""Stabilization with no feedback wire at all: random labels + trellis ML.

The observer is nearly memoryless: every n steps it quantizes the (noisy)
state into half-overlapping bins and transmits the bin's random label.
The controller knows the label seed and its own past controls, so it runs
maximum-likelihood dynamic programming over the trellis of reachable bins
and steers the best bin's center to zero.  Depth-d decoding errors occur
with probability at most 2**(-d*n*Er(R)), which tames the lam**(dn) state
excursions whenever Er(R) > eta*log2(lam).
"""

import numpy as np

from anyloop.channels import bsc
from anyloop.estimators import estimate_moment
from anyloop.exponents import dmc_capacity, random_coding_exponent
from anyloop.lattice import minimal_block_length, run_trellis_loop

ch = bsc(0.05)
rate, lam = 0.4, 1.05
er = random_coding_exponent(ch, rate)
print(f"BSC(0.05): capacity {dmc_capacity(ch):.3f}, Er({rate}) = {er.value:.4f} "
      f"> log2(lam) = {np.log2(lam):.4f}")
n = minimal_block_length(lam, rate, 20.0, 1.0)
print(f"block length n = {n}  (smallest with 2**(nR) > K*lam**n + 1)")

res = run_trellis_loop(ch, er.q, lam, 1.0, 20.0, 0.5, n,
                       horizon=4_000, trials=32, seed=9, max_states=64,
                       rate_check=rate)
depths = res.depths.ravel()
print(f"\n{'depth':>6} {'count':>8} {'bound 2^(-dnEr)':>16}")
for d in range(0, 6):
    print(f"{d:>6} {(depths == d).sum():>8} {2.0**(-d*n*er.value):>16.5f}")
print(f"\npathwise |X| <= K'lam^((d+1)n) violations: {res.bound_violations}")
m = estimate_moment(res.block_states, 1.0)
print(f"eta=1 moment trend: {m.verdict} (final {m.final:.2f})")
