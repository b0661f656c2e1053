"""The discrete collision operator against its brute-force reference.

Shows agreement with the literal triple loop, the vanishing of the operator
at equilibrium under refinement, and the exact weak-form cancellations.
"""
import numpy as np

from bnsolver.collision import collision_rates, collision_rhs, loss_gain_oracle, weak_action
from bnsolver.equilibrium import BEParams, be_distribution
from bnsolver.grid import Distribution, GridSpec, build_grid

rng = np.random.default_rng(0)
g = build_grid(GridSpec(node_count=24, x_max=5.0))
d = Distribution(g, rng.uniform(0, 2, 24) * np.exp(-g.nodes))
r = collision_rates(d)
la, ga = loss_gain_oracle(d)
print("compiled vs reference, max relative gap:",
      f"loss {np.max(np.abs(r.loss - la)) / la.max():.1e},",
      f"gain {np.max(np.abs(r.gain - ga)) / ga.max():.1e}")

for n in (64, 128, 256):
    be = be_distribution(BEParams(1.0, 1.0), build_grid(GridSpec(node_count=n)))
    rates = collision_rates(be)
    res = np.max(np.abs(collision_rhs(be, rates))) / rates.gain.max()
    print(f"N={n:4d}: equilibrium residual {res:.2e}")

print("weak form, phi = 1:", weak_action(d, lambda x: np.ones_like(x)))
print("weak form, phi = x:", weak_action(d, lambda x: x))
