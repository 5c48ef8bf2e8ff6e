"""
Rediscovering the pi pulse with policy search
=============================================

The environment applies one drive amplitude per 0.04 time step and rewards
F - 1 each step, plus a bonus once the target population passes 0.999. A
cross-entropy search over whole 100-step action sequences has no model of the
physics, yet it settles on driving at the bound until the area reaches pi.
"""

import math
import os

import numpy as np

from qdyn import rlenv
from qdyn.svgplot import line_plot_svg

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

params = rlenv.EnvParams()
res = rlenv.cem_search(params, seed=0)
replay = rlenv.rollout(params, res.best_actions)
print(f"fidelity {replay.final_fidelity:.6f} in {replay.steps_used} steps")
print(f"pulse area / pi = {res.pulse_area(params.dt) / math.pi:.4f}")

# %%
# For comparison, full drive from the start gives the analytic optimum.
bang = rlenv.rollout(params, np.ones(100))
print(f"constant drive: fidelity {bang.final_fidelity:.6f} in {bang.steps_used} steps")

k = list(range(1, replay.steps_used + 1))
with open(os.path.join(OUT, "cem_pulse.svg"), "w") as fh:
    fh.write(line_plot_svg(k, {"omega": replay.actions, "fidelity": replay.fidelities},
                           x_label="step", title="CEM pulse"))
with open(os.path.join(OUT, "cem_progress.svg"), "w") as fh:
    fh.write(line_plot_svg(list(range(len(res.std_history))),
                           {"elite spread": res.std_history},
                           x_label="round", title="CEM elite spread"))
