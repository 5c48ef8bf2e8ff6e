"""
Rabi oscillations, dephasing and the Liouville-space picture
============================================================

A qubit driven by H = sigma_x flips back and forth with P(|1>) = sin^2(t).
Adding a dephasing channel damps the oscillation, and the same open dynamics
can be run either by integrating the master equation or by exponentiating the
Liouvillian once per step. Plots land in ``demos/out``.
"""

import math
import os

import numpy as np

from qdyn import dynamics as dyn
from qdyn.quantum import (DynamicOperator, TimeGrid, basis, expect_val_dm, get_density_matrix,
                          sigma_x, sigma_y, sigma_z)
from qdyn.svgplot import line_plot_svg

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

# %%
# Closed system. Each step is an exact exponential, so the only error left is
# rounding.
grid = TimeGrid.uniform(0.0, 0.1, 101)
traj = dyn.tdse_analytic(basis(2)[0], DynamicOperator.constant(sigma_x(), grid))
p1 = np.array([abs(s.vector[1]) ** 2 for s in traj])
t = grid.points
print("max |P1 - sin^2 t| =", np.max(np.abs(p1 - np.sin(t) ** 2)))

with open(os.path.join(OUT, "rabi.svg"), "w") as fh:
    fh.write(line_plot_svg(list(t), {"P(|1>)": list(p1), "sin^2 t": list(np.sin(t) ** 2)},
                           x_label="t", title="Rabi oscillation"))

# %%
# Detuned drive plus sigma_z dephasing at rate 0.25. For weak damping
# <sigma_z> follows exp(-gamma t) cos(2 pi t).
gamma = 0.25
grid = TimeGrid.arange(0.0, 5.0, 0.02)
spec = dyn.LindbladSpec(DynamicOperator.constant(math.pi * sigma_x(), grid), (sigma_z(),), (gamma,))
rho0 = get_density_matrix(basis(2)[0])
sz = expect_val_dm(dyn.lindblad_integrate(rho0, spec), sigma_z())
t = grid.points
envelope = np.exp(-gamma * t) * np.cos(2 * np.pi * t)
print("max deviation from the damped cosine:", np.max(np.abs(sz - envelope)))

with open(os.path.join(OUT, "dephasing.svg"), "w") as fh:
    fh.write(line_plot_svg(list(t), {"<sigma_z>": list(sz), "damped cosine": list(envelope)},
                           x_label="t", title="Dephasing qubit"))

# %%
# The Liouvillian route. vec(rho) evolves linearly, so one matrix exponential
# per step replaces the Runge-Kutta substeps.
grid = TimeGrid.uniform(0.0, 0.1, 101)
spec = dyn.LindbladSpec(DynamicOperator.constant(sigma_x(), grid), (sigma_x(),), (0.02 * math.pi,))
me = expect_val_dm(dyn.lindblad_integrate(rho0, spec), sigma_y())
fls = expect_val_dm(dyn.fls_propagate(rho0, spec), sigma_y())
print("max |<sigma_y>_ME - <sigma_y>_FLS| =", np.max(np.abs(me - fls)))
