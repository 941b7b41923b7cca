"""Stabilizing over an erasure channel, and the power-law price.

The observer spends 5/4 bits per step on virtual controls, a retransmit
queue ships them over a 2-bit erasure channel, and the controller replays
the estimates into plant controls.  Decoding errors at depth d displace
the state by lam**d, so an exponential error-delay curve buys exactly a
power-law state tail: the fitted tail slope must match -alpha/log2(lam).
"""

import numpy as np

from anyloop.estimators import estimate_tail
from anyloop.plant import PlantParams
from anyloop.reliability import estimate_reliability
from anyloop.stabilizer import closed_loop_run

res = closed_loop_run(PlantParams(lam=2.0, omega=1.0), erasure_delta=0.25,
                      rate="5/4", bits_per_packet=2, horizon=200,
                      trials=600, seed=3, exact=True)
print(f"window sup: {res.width_sup}, pathwise-bound constant: {res.bound_constant}")
x = np.abs(res.states)
assert (x <= res.pathwise_bound(2.0)).all()
print(f"pathwise bound held on all {x.size} states; sup |X| = {x.max():.1f}")

rel = estimate_reliability(res.tables, d_grid=np.arange(0, 30),
                           fit_window=(5, 22), bootstrap=40, seed=4)
tails = estimate_tail(res.states, [2.0**k for k in range(2, 15)],
                      n_boot=40, seed=5)
print(f"anytime exponent alpha_hat = {rel.alpha:.3f} (CI {rel.alpha_ci})")
print(f"state tail slope           = {tails.slope:.3f} (CI {tails.slope_ci})")
print(f"prediction -alpha/log2(lam) = {-rel.alpha:.3f}")
