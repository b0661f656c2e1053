"""Sliding-window exponential norm on atoms and densities, and the mass bound."""
import math

import numpy as np

from bnsolver.measures import RadonMeasure, existence_horizon, gbeta_norm_measure, mass_bound_check

cases = {
    "one atom at 2": ((2.0, 1.0),),
    "atoms 1.5 apart": ((0.25, 1.0), (1.75, 1.0)),
    "atoms 0.7 apart": ((0.2, 1.0), (0.9, 1.0)),
}
for name, atoms in cases.items():
    print(f"{name:16s} norm {gbeta_norm_measure(RadonMeasure(atoms), 1.0):.6f}")
print("for comparison: e^2 =", f"{math.e ** 2:.6f},", "e^1.75 =", f"{math.exp(1.75):.6f},",
      "e^0.2 + e^0.9 =", f"{math.exp(0.2) + math.exp(0.9):.6f}")

rng = np.random.default_rng(1)
ratios = []
for _ in range(2000):
    mu = RadonMeasure(tuple(zip(rng.uniform(0, 10, 20), rng.exponential(1, 20))))
    total, bound, ok = mass_bound_check(mu)
    ratios.append(total / bound)
print(f"total mass / (3 x norm) over 2000 random measures: at most {max(ratios):.3f}")

print("existence horizon for norm 0.5, mass 1, beta 1.2, kappa 1, constant 0.05:",
      f"{existence_horizon(0.5, 1.0, 1.2, 1.0, 0.05):.4f}")
