"""Quantum dynamics and pulse control on dense complex matrices.

Submodules
----------
tensorcore   matrix exponential, Frechet derivative, kron, partial trace, vec
quantum      states, operators, time grids and the standard operator zoo
dynamics     Schrodinger, Lindblad and Liouville-space propagation
grape        piecewise-constant pulse optimization with exact gradients
neuralctl    neural pulse generator for the qubit/resonator bus
rlenv        qubit state-preparation environment and cross-entropy search
cli          the ``qdyn`` command line
"""

from . import dynamics, grape, neuralctl, quantum, rlenv, tensorcore
from .errors import ConvergenceError, EpisodeDoneError, InvariantError, ShapeError

__version__ = "0.1.0"

__all__ = [
    "tensorcore",
    "quantum",
    "dynamics",
    "grape",
    "neuralctl",
    "rlenv",
    "ShapeError",
    "InvariantError",
    "ConvergenceError",
    "EpisodeDoneError",
]
