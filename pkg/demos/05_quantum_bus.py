"""
GHZ state through a resonator bus with a neural pulse generator
===============================================================

Three qubits share a cavity. A sine-activated network with four hidden layers
of width 150 maps time to the three coupling strengths and the cavity drive.
Training backpropagates the GHZ infidelity through all 79 step exponentials
into the network weights. Expect a few minutes per run on one core.

Pass ``--penalty`` to also penalize cavity population above the second Fock
level.
"""

import os
import sys

from qdyn import neuralctl
from qdyn.svgplot import line_plot_svg

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

penalty = "--penalty" in sys.argv
problem = neuralctl.BusProblem(penalty=penalty)
seed = neuralctl.SHIPPED_SEEDS[penalty][0]
net = neuralctl.Mlp.create(150, 4, output_size=problem.n_controls, seed=seed)


def progress(i, loss):
    if i % 100 == 0:
        print(f"iteration {i:4d}  loss {loss:.5f}", flush=True)


result = neuralctl.train_bbnn(problem, net, callback=progress)
ev = neuralctl.bus_evaluate(result.net, problem)
print(f"GHZ fidelity {ev.fidelity:.4f}, cavity penalty {ev.penalty:.4f}")

# %%
t = list(problem.grid.points)
names = ["g1", "g2", "g3", "xi"]
with open(os.path.join(OUT, "bus_controls.svg"), "w") as fh:
    fh.write(line_plot_svg(t, {n: list(ev.controls[:, i]) for i, n in enumerate(names)},
                           x_label="t", title="Bus controls"))
with open(os.path.join(OUT, "bus_fidelity.svg"), "w") as fh:
    fh.write(line_plot_svg(t, {"GHZ fidelity": list(ev.fidelities)}, x_label="t",
                           title="Fidelity along the pulse"))
