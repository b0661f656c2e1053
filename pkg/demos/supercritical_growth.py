"""A supercritical run: growth of sup x f near the origin and the Riccati check.

Runs until sup x f is four times its initial value (a few seconds), then
checks the localized-mass inequality on the trajectory and fits the
blow-up time and near-origin exponent on what was reached.
"""
import numpy as np

from bnsolver.diagnostics import DiagnosticsConfig, FitRefused, blowup_fit, riccati_check
from bnsolver.grid import Distribution, GridSpec, build_grid
from bnsolver.integrator import StepControls, run
from bnsolver.verify import scaled_to_critical_ratio

g = build_grid(GridSpec(node_count=128, x_max=4.0, exponent=6.0))
x = g.nodes
d0 = scaled_to_critical_ratio(Distribution(g, x / (x * x + 0.01) * np.exp(-x * x)), 2.0)
tr = run(d0, StepControls(t_end=10.0, dt_max=0.01, cfl_loss=1.0, rel_change_cap=0.1,
                          blowup_threshold=4.0), diagnostics=DiagnosticsConfig(delta=1.0))
s = tr.column("supxf")
print(f"stopped: {tr.stop_reason} at t={tr.final.time:.5f} after {len(s) - 1} steps; "
      f"sup xf grew {s[-1] / s[0]:.2f}x")
rep = riccati_check(tr, 1.0)
print(f"Riccati check: {rep.checked} points, {len(rep.violations)} violations, "
      f"largest derivative/bound ratio {rep.max_ratio:.3g}")
try:
    fit = blowup_fit(tr, 1.0)
    print(f"fitted blow-up time {fit.t_star:.5f}, near-origin exponent {fit.exponent:.3f}")
except FitRefused as exc:
    print("blow-up fit refused:", exc)
