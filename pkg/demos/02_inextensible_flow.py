"""Push a curve along its normal and watch its length.

A pure normal flow stretches the curve.  Choosing the tangential
coefficient as the running integral of c2 k1 v cancels the stretching.  The
built-in scenario `pn_inextensible` does exactly that.  Its sibling
`pn_extensible_control` uses c1 = u, which stretches.
"""

import numpy as np

from nullflow.flow import evolve
from nullflow.scenario import load_scenario

for name in ("pn_inextensible", "pn_extensible_control"):
    sc = load_scenario(name)
    grid = evolve(sc)
    drift = grid.arclength_drift()
    print(f"{name:24s} {grid.shape[0] - 1:4d} steps, mode {grid.mode}")
    for j in np.linspace(0, len(grid.t) - 1, 5).astype(int):
        print(f"    t = {grid.t[j]:.5f}   relative length change {drift[j]:+.3e}")
