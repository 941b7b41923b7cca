"""The simplest stable loop: a 1-bit noiseless channel beats lam = 1.5.

A sign observer and a bang-bang controller keep the plant inside [-2, 2]
forever, for any disturbance sequence with |w| <= 1/2.  This demo pushes
adversarially and watches the bound hold with equality.
"""

import numpy as np

from anyloop.plant import example1_batch

states = example1_batch(trials=2_000, horizon=500, seed=0)
print(f"trials x steps : {states.shape[0]} x {states.shape[1] - 1}")
print(f"sup |X_t|      : {np.abs(states).max()}   (bound: 2)")
print(f"mean X^2       : {np.mean(states**2):.4f} (< 4)")

# the bound is attained: the adversary can park the state on the edge
hit = np.isclose(np.abs(states), 2.0).mean()
print(f"fraction of steps on the boundary: {hit:.4f}")
