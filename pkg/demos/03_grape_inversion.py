"""
Population inversion with GRAPE
===============================

Find piecewise-constant sigma_x and sigma_z amplitudes, each bounded by 1,
that move |0> to |1> in T = 3.15. The gradient of the infidelity comes from
one forward and one backward sweep with exact Frechet derivatives of every
step exponential, and Adam takes the steps.
"""

import os

import numpy as np

from qdyn import grape
from qdyn.svgplot import line_plot_svg

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

problem = grape.qubit_inversion_problem()
result = grape.optimize(problem, seed=123987456)
print(f"fidelity {result.fidelity:.6f} after {result.iterations} iterations")

# %%
# The optimizer does not know about pi pulses, but the x amplitude it finds
# has an area close to pi/2 (H uses theta * sigma_x, so the rotation angle is 2x the area).
amps = result.schedule.amplitudes()
print("sigma_x pulse area / (pi/2):", np.sum(amps[:, 0]) * problem.dt / (np.pi / 2))

t = list(problem.grid.points[:-1])
with open(os.path.join(OUT, "grape_pulse.svg"), "w") as fh:
    fh.write(line_plot_svg(t, {"x amplitude": list(amps[:, 0]), "z amplitude": list(amps[:, 1])},
                           x_label="t", title="GRAPE pulse"))
it = list(range(1, len(result.history) + 1))
with open(os.path.join(OUT, "grape_loss.svg"), "w") as fh:
    fh.write(line_plot_svg(it, {"loss": result.history}, x_label="iteration", title="GRAPE loss"))
