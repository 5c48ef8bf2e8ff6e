"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions do not line up."""


class ConvergenceError(RuntimeError):
    """An adaptive integrator could not meet its tolerance."""


class InvariantError(RuntimeError):
    """A physical invariant (trace, norm, Hermiticity) drifted past its limit."""


class EpisodeDoneError(RuntimeError):
    """``step`` was called on an episode that has already terminated."""
