"""
States, density matrices, operators and time-gridded operators.

The value types wrap read-only ``complex128`` arrays. Arithmetic follows the
usual bra-ket conventions: ``+``/``-`` add, ``*`` by a number scales, and
``Operator * Operator`` or ``Operator @ Operator`` composes. ``Operator @
QuantumState`` applies the operator to the state.

Index 0 of every two-level system is the state returned by ``basis(2)[0]``.
``sigma_plus`` maps index 1 to index 0 and ``sigma_minus`` does the reverse.
"""

from dataclasses import dataclass
from math import lgamma
import numbers

import numpy as np

from . import tensorcore as tc
from .errors import ShapeError

__all__ = [
    "NORM_TOL",
    "TimeGrid",
    "QuantumState",
    "Operator",
    "DensityMatrix",
    "DynamicOperator",
    "basis",
    "coherent",
    "normalize",
    "inner_product",
    "populations",
    "get_density_matrix",
    "tensor_product_states",
    "tensor_product_ops",
    "partial_trace",
    "sigma_x",
    "sigma_y",
    "sigma_z",
    "sigma_plus",
    "sigma_minus",
    "annihilation",
    "creation",
    "eye",
    "displacement",
    "parity",
    "common_matrix",
    "expect_val_dm",
    "fidelity",
]

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-8
TRACE_TOL = 1e-8


def _frozen(m):
    m = np.array(m, dtype=np.complex128)
    m.setflags(write=False)
    return m


def _check_product_dims(product_dims, n):
    if product_dims is None:
        return None
    dims = tuple(int(d) for d in product_dims)
    if any(d < 1 for d in dims):
        raise ValueError(f"product dims must be positive, got {dims}")
    if int(np.prod(dims)) != n:
        raise ShapeError(f"product dims {dims} do not multiply to {n}")
    return dims


@dataclass(frozen=True)
class TimeGrid:
    """Uniformly spaced time points ``t0, t0 + dt, ...`` (hbar = 1 units)."""

    t0: float
    dt: float
    points: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("time grid needs at least one point")
        if pts.size > 1 and np.max(np.abs(np.diff(pts) - self.dt)) > 1e-9:
            raise ValueError("time grid points are not uniformly spaced by dt")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, t0, dt, n_points):
        n_points = int(n_points)
        if n_points < 1:
            raise ValueError("time grid needs at least one point")
        return cls(float(t0), float(dt), float(t0) + float(dt) * np.arange(n_points))

    @classmethod
    def arange(cls, t0, stop, dt, *, include_stop=False):
        """Points from ``t0`` up to ``stop`` (excluded unless ``include_stop``).

        Mirrors ``np.arange(t0, stop, dt)`` and ``np.arange(t0, stop + dt, dt)``
        without their floating-point endpoint surprises.
        """
        n = int(round((stop - t0) / dt))
        if include_stop:
            n += 1
        return cls.uniform(t0, dt, n)

    @classmethod
    def from_points(cls, points):
        pts = np.asarray(points, dtype=float)
        if pts.size < 2:
            raise ValueError("need two points to infer dt")
        return cls(float(pts[0]), float(pts[1] - pts[0]), pts)

    def __len__(self):
        return self.points.size

    @property
    def n_steps(self):
        return self.points.size - 1

    @property
    def t_final(self):
        return float(self.points[-1])

    def index_at(self, t):
        """Index of the grid point at or immediately left of ``t``."""
        k = int(np.floor((t - self.t0) / self.dt + 1e-9))
        return min(max(k, 0), self.points.size - 1)

    def matches(self, other):
        return (
            len(self) == len(other)
            and abs(self.t0 - other.t0) <= 1e-9
            and abs(self.dt - other.dt) <= 1e-9
        )

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and self.matches(other)

    def __hash__(self):
        return hash((round(self.t0, 9), round(self.dt, 9), len(self)))


class QuantumState:
    """Column vector of amplitudes, optionally tagged with tensor factor dims."""

    __slots__ = ("amplitudes", "product_dims")

    def __init__(self, amplitudes, product_dims=None):
        amp = np.asarray(amplitudes, dtype=np.complex128)
        if amp.ndim == 1:
            amp = amp.reshape(-1, 1)
        if amp.ndim != 2 or amp.shape[1] != 1 or amp.shape[0] < 1:
            raise ShapeError(f"state must be an (n, 1) column, got {amp.shape}")
        if not np.all(np.isfinite(amp)):
            raise ValueError("state has non-finite amplitudes")
        self.amplitudes = _frozen(amp)
        self.product_dims = _check_product_dims(product_dims, amp.shape[0])

    @property
    def dims(self):
        return self.amplitudes.shape[0]

    @property
    def vector(self):
        """Amplitudes as a flat array."""
        return self.amplitudes[:, 0]

    @staticmethod
    def basis(n):
        return basis(n)

    @staticmethod
    def coherent(n_fock, alpha):
        return coherent(n_fock, alpha)

    def normalize(self):
        return normalize(self)

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol=NORM_TOL):
        return abs(self.norm() ** 2 - 1.0) <= tol

    def inner_product(self, other):
        return inner_product(self, other)

    def populations(self):
        return populations(self)

    def dagger(self):
        """The bra, as a ``(1, n)`` array."""
        return tc.adjoint(self.amplitudes)

    def _like(self, amp):
        return QuantumState(amp, self.product_dims)

    def __add__(self, other):
        if not isinstance(other, QuantumState):
            return NotImplemented
        if other.dims != self.dims:
            raise ShapeError(f"cannot add states of dims {self.dims} and {other.dims}")
        return self._like(self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        if not isinstance(other, QuantumState):
            return NotImplemented
        if other.dims != self.dims:
            raise ShapeError(f"cannot subtract states of dims {self.dims} and {other.dims}")
        return self._like(self.amplitudes - other.amplitudes)

    def __neg__(self):
        return self._like(-self.amplitudes)

    def __mul__(self, scalar):
        if not isinstance(scalar, numbers.Number):
            return NotImplemented
        return self._like(scalar * self.amplitudes)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._like(self.amplitudes / scalar)

    def __repr__(self):
        return f"QuantumState(dims={self.dims}, product_dims={self.product_dims})"


class Operator:
    """Square matrix acting on an ``n``-dimensional Hilbert space."""

    __slots__ = ("matrix", "product_dims")

    def __init__(self, matrix, product_dims=None):
        m = tc.as_matrix(matrix, name="operator")
        if m.shape[0] != m.shape[1]:
            raise ShapeError(f"operator must be square, got {m.shape}")
        self.matrix = _frozen(m)
        self.product_dims = _check_product_dims(product_dims, m.shape[0])

    @property
    def dims(self):
        return self.matrix.shape[0]

    def dagger(self):
        return Operator(tc.adjoint(self.matrix), self.product_dims)

    def is_hermitian(self, tol=1e-10):
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)

    def is_unitary(self, tol=1e-10):
        m = self.matrix
        return bool(np.max(np.abs(m.conj().T @ m - np.eye(self.dims)), initial=0.0) <= tol)

    def mul(self, state):
        """Act on a state vector."""
        if state.dims != self.dims:
            raise ShapeError(f"operator dims {self.dims} vs state dims {state.dims}")
        return QuantumState(self.matrix @ state.amplitudes, state.product_dims)

    def opmul(self, other):
        return Operator(tc.matmul(self.matrix, other.matrix), self.product_dims)

    def _coerce(self, other):
        if isinstance(other, Operator):
            if other.dims != self.dims:
                raise ShapeError(f"operator dims {self.dims} vs {other.dims}")
            return other.matrix
        return None

    def __add__(self, other):
        m = self._coerce(other)
        if m is None:
            return NotImplemented
        return Operator(self.matrix + m, self.product_dims)

    def __sub__(self, other):
        m = self._coerce(other)
        if m is None:
            return NotImplemented
        return Operator(self.matrix - m, self.product_dims)

    def __neg__(self):
        return Operator(-self.matrix, self.product_dims)

    def __matmul__(self, other):
        if isinstance(other, QuantumState):
            return self.mul(other)
        if isinstance(other, Operator):
            return self.opmul(other)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, numbers.Number):
            return Operator(other * self.matrix, self.product_dims)
        return self.__matmul__(other)

    def __rmul__(self, other):
        if isinstance(other, numbers.Number):
            return Operator(other * self.matrix, self.product_dims)
        return NotImplemented

    def __truediv__(self, scalar):
        return Operator(self.matrix / scalar, self.product_dims)

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.dims}, product_dims={self.product_dims})"


class DensityMatrix(Operator):
    """Hermitian, unit-trace operator.

    Input within 1e-8 of Hermitian is symmetrized; anything further off is
    rejected. Positivity is not checked here.
    """

    __slots__ = ()

    def __init__(self, matrix, product_dims=None, *, check_trace=True):
        m = tc.as_matrix(matrix, name="density matrix")
        if m.shape[0] != m.shape[1]:
            raise ShapeError(f"density matrix must be square, got {m.shape}")
        skew = np.max(np.abs(m - m.conj().T), initial=0.0)
        if skew > HERMITIAN_TOL:
            raise ValueError(f"density matrix is not Hermitian (max deviation {skew:.3g})")
        m = 0.5 * (m + m.conj().T)
        if check_trace and abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {np.trace(m).real:.12g} is not 1")
        super().__init__(m, product_dims)

    def purity(self):
        return float(np.real(np.trace(self.matrix @ self.matrix)))


class DynamicOperator:
    """One matrix per point of a time grid (piecewise-constant in time).

    Build it with one of the three named constructors: :meth:`from_frames`,
    :meth:`constant` or :meth:`from_function`.
    """

    __slots__ = ("grid", "frames", "_constant")

    def __init__(self, grid, frames, *, constant=False):
        frames = np.asarray(frames, dtype=np.complex128)
        if frames.ndim != 3 or frames.shape[1] != frames.shape[2]:
            raise ShapeError(f"frames must have shape (K, n, n), got {frames.shape}")
        if frames.shape[0] != len(grid):
            raise ShapeError(f"{frames.shape[0]} frames for {len(grid)} grid points")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frames have non-finite entries")
        frames = np.array(frames)
        frames.setflags(write=False)
        self.grid = grid
        self.frames = frames
        self._constant = bool(constant)

    @classmethod
    def from_frames(cls, frames, grid):
        return cls(grid, frames)

    @classmethod
    def constant(cls, op, grid):
        m = op.matrix if isinstance(op, Operator) else tc.as_matrix(op)
        frames = np.broadcast_to(m, (len(grid),) + m.shape)
        return cls(grid, frames, constant=True)

    @classmethod
    def from_function(cls, fn, grid):
        """Sample ``fn(t)`` (a matrix or an Operator) at every grid point."""
        frames = []
        for t in grid.points:
            m = fn(float(t))
            frames.append(m.matrix if isinstance(m, Operator) else tc.as_matrix(m))
        return cls(grid, np.stack(frames))

    @property
    def dims(self):
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]

    def at(self, k):
        """Matrix of frame ``k``."""
        return self.frames[k]

    def at_time(self, t):
        """Frame in force at time ``t`` (nearest grid point to the left)."""
        return self.frames[self.grid.index_at(t)]

    def is_constant(self):
        if self._constant:
            return True
        return bool(np.all(self.frames == self.frames[0]))

    def dagger(self):
        return DynamicOperator(self.grid, np.swapaxes(self.frames, 1, 2).conj(),
                               constant=self._constant)

    def __add__(self, other):
        if not isinstance(other, DynamicOperator):
            return NotImplemented
        if not self.grid.matches(other.grid):
            raise ShapeError("dynamic operators live on different grids")
        return DynamicOperator(self.grid, self.frames + other.frames,
                               constant=self._constant and other._constant)

    def __mul__(self, scalar):
        if not isinstance(scalar, numbers.Number):
            return NotImplemented
        return DynamicOperator(self.grid, scalar * self.frames, constant=self._constant)

    __rmul__ = __mul__

    def __repr__(self):
        return f"DynamicOperator(dims={self.dims}, points={len(self)})"


# --- states -----------------------------------------------------------------

def basis(n):
    """The ``n`` computational basis states of an ``n``-level system."""
    n = int(n)
    if n < 1:
        raise ValueError("basis dimension must be at least 1")
    return [QuantumState(np.eye(n, dtype=np.complex128)[:, [k]]) for k in range(n)]


def coherent(n_fock, alpha):
    """Coherent state truncated to ``n_fock`` Fock levels and renormalized."""
    n_fock = int(n_fock)
    if n_fock < 1:
        raise ValueError("n_fock must be at least 1")
    alpha = complex(alpha)
    k = np.arange(n_fock)
    if alpha == 0:
        amp = (k == 0).astype(np.complex128)
    else:
        # alpha**k / sqrt(k!) in log space to stay finite for large k
        log_mag = k * np.log(abs(alpha)) - 0.5 * np.array([lgamma(j + 1.0) for j in k])
        amp = np.exp(log_mag - log_mag.max()) * np.exp(1j * np.angle(alpha) * k)
    amp = amp / np.linalg.norm(amp)
    return QuantumState(amp.reshape(-1, 1))


def normalize(psi):
    norm = psi.norm()
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return QuantumState(psi.amplitudes / norm, psi.product_dims)


def inner_product(psi, phi):
    """``<psi|phi>``, conjugating the first argument."""
    if psi.dims != phi.dims:
        raise ShapeError(f"state dims {psi.dims} vs {phi.dims}")
    return complex(np.vdot(psi.amplitudes, phi.amplitudes))


def populations(psi):
    return np.abs(psi.vector) ** 2


def get_density_matrix(psi):
    if not psi.is_normalized():
        raise ValueError("get_density_matrix needs a normalized state")
    v = psi.amplitudes
    return DensityMatrix(v @ v.conj().T, psi.product_dims)


def _factor_dims(x):
    return list(x.product_dims) if x.product_dims is not None else [x.dims]


def tensor_product_states(*states):
    if len(states) < 2:
        raise ValueError("tensor_product_states needs at least two states")
    amp = states[0].amplitudes
    dims = _factor_dims(states[0])
    for s in states[1:]:
        amp = np.kron(amp, s.amplitudes)
        dims += _factor_dims(s)
    return QuantumState(amp, dims)


def tensor_product_ops(*ops):
    """Kronecker product of operators in argument order.

    The result is a :class:`DensityMatrix` when every factor is one.
    """
    if len(ops) < 2:
        raise ValueError("tensor_product_ops needs at least two operators")
    m = ops[0].matrix
    dims = _factor_dims(ops[0])
    for op in ops[1:]:
        m = np.kron(m, op.matrix)
        dims += _factor_dims(op)
    if all(isinstance(op, DensityMatrix) for op in ops):
        return DensityMatrix(m, dims, check_trace=False)
    return Operator(m, dims)


def partial_trace(rho, trace_out):
    if rho.product_dims is None:
        raise ValueError("partial_trace needs product_dims on the input")
    keep = [d for i, d in enumerate(rho.product_dims) if i not in set(trace_out)]
    m = tc.partial_trace_raw(rho.matrix, rho.product_dims, trace_out)
    dims = keep or None
    if isinstance(rho, DensityMatrix):
        return DensityMatrix(m, dims, check_trace=False)
    return Operator(m, dims)


# --- common matrices ----------------------------------------------------------

def sigma_x():
    return Operator([[0, 1], [1, 0]])


def sigma_y():
    return Operator([[0, -1j], [1j, 0]])


def sigma_z():
    return Operator([[1, 0], [0, -1]])


def sigma_plus():
    return Operator([[0, 1], [0, 0]])


def sigma_minus():
    return Operator([[0, 0], [1, 0]])


def _check_dim(n):
    n = int(n)
    if n < 1:
        raise ValueError(f"dimension must be at least 1, got {n}")
    return n


def annihilation(n):
    """Truncated ladder operator with ``a[k-1, k] = sqrt(k)``."""
    n = _check_dim(n)
    return Operator(np.diag(np.sqrt(np.arange(1, n)), k=1))


def creation(n):
    return annihilation(n).dagger()


def eye(n):
    return Operator(np.eye(_check_dim(n)))


def displacement(n, alpha):
    """``exp(alpha a^dag - conj(alpha) a)`` on ``n`` Fock levels."""
    n = _check_dim(n)
    a = annihilation(n).matrix
    alpha = complex(alpha)
    return Operator(tc.expm(alpha * a.conj().T - np.conj(alpha) * a))


def parity(n):
    """``exp(i pi a^dag a)``, which is ``diag((-1)**k)``."""
    n = _check_dim(n)
    return Operator(np.diag((-1.0) ** np.arange(n)))


_ZOO = {
    "sigmaX": sigma_x,
    "sigmaY": sigma_y,
    "sigmaZ": sigma_z,
    "sigmaPlus": sigma_plus,
    "sigmaMinus": sigma_minus,
    "annihilation": annihilation,
    "creation": creation,
    "eye": eye,
    "displacement": displacement,
    "parity": parity,
}


def common_matrix(kind, *args):
    """Look up a standard operator by name, e.g. ``common_matrix("eye", 3)``."""
    try:
        fn = _ZOO[kind]
    except KeyError:
        raise ValueError(f"unknown matrix kind {kind!r}; choose from {sorted(_ZOO)}") from None
    return fn(*args)


# --- measurements -------------------------------------------------------------

def expect_val_dm(trajectory, op):
    """``Tr(rho_k O)`` for every density matrix in ``trajectory``."""
    if not op.is_hermitian():
        raise ValueError("expect_val_dm needs a Hermitian observable")
    o = op.matrix
    out = []
    for rho in trajectory:
        if rho.dims != op.dims:
            raise ShapeError(f"density matrix dims {rho.dims} vs operator dims {op.dims}")
        # Tr(rho O) without forming the product
        val = np.sum(rho.matrix * o.T)
        if abs(val.imag) > 1e-8:
            raise ValueError(f"expectation value has imaginary part {val.imag:.3g}")
        out.append(val.real)
    return np.array(out)


def fidelity(rho, target):
    """``Tr(rho_target rho)``; equals ``|<phi|psi>|**2`` for two pure states."""
    if rho.dims != target.dims:
        raise ShapeError(f"density matrix dims {rho.dims} vs target dims {target.dims}")
    return float(np.real(np.sum(target.matrix * rho.matrix.T)))
