"""
Time evolution of closed and open quantum systems.

Three engines share the same inputs (an initial state, a ``DynamicOperator``
Hamiltonian and a ``TimeGrid``) and all return a :class:`Trajectory` with one
entry per grid point:

* :func:`tdse_analytic` / :func:`fls_propagate` treat the generator as constant
  over each grid interval and apply its exponential exactly.
* :func:`tdse_numeric` / :func:`lindblad_integrate` integrate the equations of
  motion with a fixed-step RK4 or an adaptive Runge-Kutta-Fehlberg 4(5) stepper.

hbar = 1 throughout. Within a grid interval ``[t_k, t_k+1]`` every engine uses
the frame sampled at ``t_k``.

The dissipator is the standard GKSL form
``gamma (L rho L^dag - 1/2 {L^dag L, rho})`` and the Hamiltonian part of the
Liouvillian is the commutator ``-i (L[H] - R[H])``; both are the signs that
preserve the trace.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensorcore as tc
from .errors import ConvergenceError, InvariantError, ShapeError
from .quantum import DensityMatrix, DynamicOperator, Operator, QuantumState, TimeGrid

__all__ = [
    "HBAR",
    "Trajectory",
    "IntegratorConfig",
    "LindbladSpec",
    "Liouvillian",
    "tdse_analytic",
    "tdse_numeric",
    "lindblad_rhs",
    "lindblad_integrate",
    "build_liouvillian",
    "fls_propagate",
]

HBAR = 1.0

TRACE_DRIFT_LIMIT = 1e-4


@dataclass(frozen=True)
class Trajectory:
    """Ordered ``(time, state)`` pairs produced by an engine."""

    times: np.ndarray
    states: list

    def __len__(self):
        return len(self.states)

    def __getitem__(self, k):
        return self.states[k]

    def __iter__(self):
        return iter(self.states)

    def pairs(self):
        return list(zip(self.times.tolist(), self.states))

    @property
    def final(self):
        return self.states[-1]


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4_fixed"
    substeps_per_dt: int = 10
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.method not in ("rk4_fixed", "rk45_adaptive"):
            raise ValueError(f"unknown integrator {self.method!r}")
        if int(self.substeps_per_dt) < 1:
            raise ValueError("substeps_per_dt must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class LindbladSpec:
    hamiltonian: DynamicOperator
    jump_ops: Sequence[Operator] = field(default_factory=tuple)
    rates: Sequence[float] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.jump_ops) != len(self.rates):
            raise ValueError(f"{len(self.jump_ops)} jump operators but {len(self.rates)} rates")
        if any(r < 0 for r in self.rates):
            raise ValueError("rates must be non-negative")
        for op in self.jump_ops:
            if op.dims != self.hamiltonian.dims:
                raise ShapeError(f"jump operator dims {op.dims} vs Hamiltonian dims "
                                 f"{self.hamiltonian.dims}")
        object.__setattr__(self, "jump_ops", tuple(self.jump_ops))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))

    @property
    def dims(self):
        return self.hamiltonian.dims

    def jump_matrices(self):
        return [op.matrix for op in self.jump_ops]


@dataclass(frozen=True)
class Liouvillian:
    """Superoperator acting on row-major vectorized density matrices."""

    dims: int
    matrix: np.ndarray

    def apply(self, rho):
        return tc.unvec(self.matrix @ tc.vec(rho), self.dims)


# --- steppers -------------------------------------------------------------------

# Fehlberg 4(5) tableau
_RKF_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_RKF_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_RKF_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
_RKF_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)
_RKF_ERR = tuple(b5 - b4 for b4, b5 in zip(_RKF_B4, _RKF_B5))


def _rk4(f, y, h, n):
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


class _Rkf45:
    """Adaptive Fehlberg stepper with PI step-size control.

    The step size carries over between grid intervals; each interval is
    finished exactly on its right endpoint.
    """

    safety = 0.9
    alpha = 0.7 / 5
    beta = 0.4 / 5

    def __init__(self, dt, abs_tol, rel_tol):
        self.dt = dt
        self.h = dt / 10.0
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self.err_prev = 1.0

    def _attempt(self, f, y, h):
        ks = []
        for i in range(6):
            yi = y
            for a, k in zip(_RKF_A[i], ks):
                yi = yi + (h * a) * k
            ks.append(f(yi))
        y4 = y + h * sum(b * k for b, k in zip(_RKF_B4, ks) if b)
        err_vec = h * sum(e * k for e, k in zip(_RKF_ERR, ks) if e)
        scale = self.abs_tol + self.rel_tol * np.maximum(np.abs(y), np.abs(y4))
        with np.errstate(over="ignore", invalid="ignore"):
            err = float(np.max(np.abs(err_vec) / scale))
        if not np.isfinite(err):
            err = np.inf
        return y4, err

    def advance(self, f, y, span):
        remaining = span
        while remaining > 1e-14 * self.dt:
            if self.h < self.dt * 1e-12:
                raise ConvergenceError(f"step size underflow (h = {self.h:.3g})")
            h = min(self.h, remaining)
            y_new, err = self._attempt(f, y, h)
            if err <= 1.0:
                y = y_new
                remaining -= h
                factor = self.safety * max(err, 1e-10) ** -self.alpha * self.err_prev ** self.beta
                self.err_prev = max(err, 1e-4)
                # a step clipped to land on the grid leaves the carried size alone
                if h >= self.h:
                    self.h = h * min(5.0, max(0.2, factor))
            else:
                self.h = h * max(0.2, self.safety * err ** -0.2)
        return y


def _integrate(make_rhs, y0, grid, cfg):
    """Integrate interval by interval; ``make_rhs(k)`` gives the RHS for interval k."""
    ys = [y0]
    y = y0
    dt = grid.dt
    if cfg.method == "rk4_fixed":
        n = int(cfg.substeps_per_dt)
        for k in range(grid.n_steps):
            y = _rk4(make_rhs(k), y, dt / n, n)
            ys.append(y)
    else:
        stepper = _Rkf45(dt, cfg.abs_tol, cfg.rel_tol)
        for k in range(grid.n_steps):
            y = stepper.advance(make_rhs(k), y, dt)
            ys.append(y)
    return ys


def _check_grid(h, grid):
    if grid is None:
        return h.grid
    if not h.grid.matches(grid):
        raise ShapeError("Hamiltonian grid does not match the requested time grid")
    return grid


# --- Schroedinger ------------------------------------------------------------------

def tdse_analytic(psi0, h, grid=None):
    """Piecewise-exact Schroedinger evolution ``psi_k+1 = expm(-i H_k dt) psi_k``."""
    grid = _check_grid(h, grid)
    if h.dims != psi0.dims:
        raise ShapeError(f"Hamiltonian dims {h.dims} vs state dims {psi0.dims}")
    if not psi0.is_normalized():
        raise ValueError("initial state is not normalized")
    n_steps = grid.n_steps
    if h.is_constant():
        u = tc.expm(-1j * grid.dt / HBAR * h.frames[0], hermitian_eig=True)
        props = [u] * n_steps
    else:
        props = tc.expm(-1j * grid.dt / HBAR * h.frames[:n_steps], hermitian_eig=True)
    v = psi0.amplitudes
    states = [psi0]
    for k in range(n_steps):
        v = props[k] @ v
        states.append(QuantumState(v, psi0.product_dims))
    return Trajectory(grid.points, states)


def tdse_numeric(psi0, h, grid=None, cfg=IntegratorConfig()):
    """Integrate ``d psi/dt = -i H(t) psi`` with the configured stepper."""
    grid = _check_grid(h, grid)
    if h.dims != psi0.dims:
        raise ShapeError(f"Hamiltonian dims {h.dims} vs state dims {psi0.dims}")

    def make_rhs(k):
        gen = -1j / HBAR * h.frames[k]
        return lambda y: gen @ y

    ys = _integrate(make_rhs, psi0.amplitudes.copy(), grid, cfg)
    return Trajectory(grid.points, [QuantumState(y, psi0.product_dims) for y in ys])


# --- Lindblad -----------------------------------------------------------------------

def lindblad_rhs(rho, h, jump_ops=(), rates=()):
    """GKSL right-hand side ``-i[H, rho] + sum_i g_i (L rho L^dag - 1/2 {L^dag L, rho})``."""
    rho = np.asarray(rho, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape != h.shape or rho.shape[0] != rho.shape[1]:
        raise ShapeError(f"rho {rho.shape} and H {h.shape} must be equal square shapes")
    if len(jump_ops) != len(rates):
        raise ValueError("jump_ops and rates differ in length")
    out = -1j / HBAR * (h @ rho - rho @ h)
    for op, g in zip(jump_ops, rates):
        l = op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=np.complex128)
        if l.shape != rho.shape:
            raise ShapeError(f"jump operator shape {l.shape} vs rho {rho.shape}")
        if g == 0:
            continue
        ld = l.conj().T
        ldl = ld @ l
        out = out + g * (l @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def _lindblad_generator(h, ls, rates):
    """Closure evaluating the GKSL RHS for fixed H with precomputed L^dag L."""
    pre = [(g, l, l.conj().T, l.conj().T @ l) for l, g in zip(ls, rates) if g != 0]
    mh = -1j / HBAR * h

    def rhs(rho):
        a = mh @ rho
        out = a + a.conj().T  # -i[H, rho] for Hermitian rho, H
        for g, l, ld, ldl in pre:
            b = ldl @ rho
            out = out + g * (l @ rho @ ld - 0.5 * (b + b.conj().T))
        return out

    return rhs


def _finish_density_trajectory(mats, grid, product_dims):
    states = []
    for m in mats:
        drift = abs(np.trace(m).real - 1.0)
        if drift > TRACE_DRIFT_LIMIT:
            raise InvariantError(
                f"trace drifted by {drift:.3g}; the time step is probably too large"
            )
        states.append(DensityMatrix(m, product_dims, check_trace=False))
    return Trajectory(grid.points, states)


def lindblad_integrate(rho0, spec, grid=None, cfg=IntegratorConfig()):
    """Numerically integrate the Lindblad master equation on ``grid``."""
    h = spec.hamiltonian
    grid = _check_grid(h, grid)
    if rho0.dims != spec.dims:
        raise ShapeError(f"density matrix dims {rho0.dims} vs spec dims {spec.dims}")
    ls = spec.jump_matrices()
    rates = spec.rates
    hermitian = all(Operator(f).is_hermitian(1e-12) for f in (h.frames[:1] if h.is_constant()
                                                             else h.frames))
    if h.is_constant():
        gen = (_lindblad_generator(h.frames[0], ls, rates) if hermitian
               else (lambda r, f=h.frames[0]: lindblad_rhs(r, f, ls, rates)))
        make_rhs = lambda k: gen
    elif hermitian:
        make_rhs = lambda k: _lindblad_generator(h.frames[k], ls, rates)
    else:
        make_rhs = lambda k: (lambda r: lindblad_rhs(r, h.frames[k], ls, rates))
    mats = _integrate(make_rhs, np.array(rho0.matrix), grid, cfg)
    return _finish_density_trajectory(mats, grid, rho0.product_dims)


# --- Fock-Liouville space -----------------------------------------------------------

def build_liouvillian(h, jump_ops=(), rates=()):
    """Liouvillian for the row-major convention ``vec(A rho B) = kron(A, B.T) vec(rho)``.

    ``-i (H x I - I x H^T) + sum_i g_i [F x conj(F) - 1/2 (F^dag F x I + I x (F^dag F)^T)]``
    """
    h = tc.as_matrix(h.matrix if isinstance(h, Operator) else h, name="H")
    n = h.shape[0]
    if h.shape != (n, n):
        raise ShapeError(f"H must be square, got {h.shape}")
    if len(jump_ops) != len(rates):
        raise ValueError("jump_ops and rates differ in length")
    ident = np.eye(n, dtype=np.complex128)
    sup = -1j / HBAR * (np.kron(h, ident) - np.kron(ident, h.T))
    for op, g in zip(jump_ops, rates):
        f = op.matrix if isinstance(op, Operator) else tc.as_matrix(op)
        if f.shape != (n, n):
            raise ShapeError(f"jump operator shape {f.shape} vs H {h.shape}")
        fdf = f.conj().T @ f
        sup = sup + g * (np.kron(f, f.conj()) - 0.5 * (np.kron(fdf, ident) + np.kron(ident, fdf.T)))
    return Liouvillian(n, sup)


def fls_propagate(rho0, spec, grid=None, *, chunk=64):
    """Propagate ``vec(rho)`` with ``expm(L_k dt)`` for every grid interval.

    A time-independent Liouvillian is exponentiated once and reused.
    """
    h = spec.hamiltonian
    grid = _check_grid(h, grid)
    if rho0.dims != spec.dims:
        raise ShapeError(f"density matrix dims {rho0.dims} vs spec dims {spec.dims}")
    n = spec.dims
    n_steps = grid.n_steps
    ls, rates = spec.jump_matrices(), spec.rates

    if h.is_constant():
        prop = tc.expm(build_liouvillian(h.frames[0], ls, rates).matrix * grid.dt)
        props = lambda k: prop
    else:
        cache = {}

        def props(k):
            block = k // chunk
            if block not in cache:
                cache.clear()
                lo, hi = block * chunk, min((block + 1) * chunk, n_steps)
                sups = np.stack([build_liouvillian(h.frames[j], ls, rates).matrix
                                 for j in range(lo, hi)])
                cache[block] = tc.expm(sups * grid.dt)
            return cache[block][k - block * chunk]

    v = tc.vec(rho0.matrix)
    mats = [np.array(rho0.matrix)]
    for k in range(n_steps):
        v = props(k) @ v
        m = v.reshape(n, n)
        mats.append(0.5 * (m + m.conj().T))
    return _finish_density_trajectory(mats, grid, rho0.product_dims)
