"""Bose-Einstein equilibria: moments, critical mass and the inverse fit."""
from bnsolver.equilibrium import be_moments, critical_mass, fit_equilibrium

mass, energy = be_moments(1.0, 1.0)
print(f"equilibrium alpha=1, beta=1 carries mass {mass:.6f} and energy {energy:.6f}")

fit = fit_equilibrium(mass, energy)
print(f"fitting those moments back gives alpha={fit.alpha:.10f}, beta={fit.beta:.10f}")

for ratio in (0.5, 1.0, 1.5):
    m = ratio * critical_mass(energy)
    p = fit_equilibrium(m, energy)
    print(f"mass {ratio:.1f}x critical: alpha={p.alpha:.4g} beta={p.beta:.4g} "
          f"condensate m0={p.m0:.4g} supercritical={p.supercritical}")
