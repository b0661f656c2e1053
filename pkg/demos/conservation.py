"""Mass and energy along a run, with and without the moment-restoring remap."""
import numpy as np

from bnsolver.grid import Distribution, GridSpec, build_grid
from bnsolver.integrator import StepControls, run

for n in (64, 128, 256):
    g = build_grid(GridSpec(node_count=n))
    d = Distribution(g, 0.8 * np.exp(-g.nodes) / (1 + g.nodes))
    for remap in (False, True):
        tr = run(d, StepControls(t_end=1.0), remap_on=remap)
        m = tr.column("mass")
        e = tr.column("energy")
        print(f"N={n:4d} remap={'on ' if remap else 'off'} steps={len(m) - 1:3d} "
              f"mass drift {abs(m[-1] / m[0] - 1):.2e} energy drift {abs(e[-1] / e[0] - 1):.2e}")
