"""
Collapse and revival in the Jaynes-Cummings model
=================================================

An atom in a cavity prepared in a coherent state with mean photon number 20.
Each photon number n contributes a Rabi frequency 2 g sqrt(n+1); the spread of
frequencies washes out the atomic inversion (collapse) until the phases
realign near t = 2 pi sqrt(20) (revival).
"""

import os

from qdyn.cli import jaynes_cummings_run, jc_metrics
from qdyn.svgplot import line_plot_svg

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

t, w, parity = jaynes_cummings_run(T=40.0, dt=0.1, N_fock=50, alpha_sq=20.0)

# %%
# Numbers worth checking against the plot
for key, value in jc_metrics(t, w, parity).items():
    print(f"{key:>24}: {value}")

with open(os.path.join(OUT, "jaynes_cummings.svg"), "w") as fh:
    fh.write(line_plot_svg(list(t), {"<sigma_z>": list(w), "photon parity": list(parity)},
                           x_label="t", title="Jaynes-Cummings collapse and revival"))
