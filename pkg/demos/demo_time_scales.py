"""Changing clocks without changing the problem.

Three reductions connect time scales: sampling a continuous-time plant
with a zero-order hold, grouping discrete steps into blocks, and the
rescaling that turns a persistent-disturbance stabilizer into an
almost-sure one for an undisturbed plant.  The rate threshold is
invariant under all of them: the channel must carry log2(gain) bits per
plant step, i.e. `lam` nats per second, however you slice time.
"""

import numpy as np

from anyloop.plant import PlantParams, almost_sure_transform, block_time, sample_continuous

lam_ct = 0.8  # per-second growth rate
print("zero-order-hold sampling of dx/dt = 0.8 x + u + w:")
print(f"{'tau':>6} {'lam_step':>10} {'omega_step':>11} {'log(lam)/tau':>13}")
for tau in (0.25, 0.5, 1.0, 2.0):
    p = sample_continuous(lam_ct, 1.0, tau)
    print(f"{tau:>6} {p.lam:>10.4f} {p.omega:>11.4f} {np.log(p.lam)/tau:>13.6f}")
print("the per-second rate threshold is tau-invariant\n")

p = PlantParams(lam=1.5, omega=1.0)
for n in (1, 2, 4):
    b = block_time(p, n)
    print(f"blocks of {n}: gain {b.lam:.4f}, disturbance bound {b.omega:.4f}, "
          f"bits/step threshold {np.log2(b.lam)/n:.4f}")

print("\nalmost-sure stabilization of an undisturbed lam = 1.2 plant")
w = almost_sure_transform(PlantParams(lam=1.2, omega=1.0, x0=0.4), lam_fast=1.5)
xs = w.run(lambda t, x: 1 if x > 0 else 0,
           lambda t, s: -1.5 if s == 1 else 1.5, x0=0.4, horizon=120)
print(f"per-step moment contraction (eta = 2): {w.moment_decay(2.0):.4f}")
for t in (0, 20, 60, 119):
    print(f"  |X_{t}| = {abs(xs[t]):.3e}")
