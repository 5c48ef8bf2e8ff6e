"""
Neural pulse generator for the driven quantum bus.

A small dense network maps time to the control vector ``(g_1, ..., g_n, xi)``
of the bus Hamiltonian

    H(t) = sum_j g_j(t) (a^dag sigma_j^- + a sigma_j^+) + xi(t) (a + a^dag)

with qubit ``j`` in tensor slot ``j`` and the resonator last. The network is
trained end to end: the loss is the infidelity of the resonator-traced final
state with the GHZ state, optionally plus a running penalty on the population
of high Fock levels, and the gradient is an exact discrete adjoint through the
piecewise-constant propagation chained into the network's backward pass.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache
import struct

import numpy as np

from .dynamics import HBAR, tdse_analytic
from .errors import ShapeError
from .grape import AdamState, adam_step
from .quantum import (
    DensityMatrix,
    DynamicOperator,
    TimeGrid,
    annihilation,
    basis,
    eye,
    fidelity,
    get_density_matrix,
    partial_trace,
    sigma_minus,
    sigma_plus,
    tensor_product_ops,
    tensor_product_states,
)

__all__ = [
    "Mlp",
    "mlp_forward",
    "mlp_backward",
    "save_mlp",
    "load_mlp",
    "SHIPPED_SEEDS",
    "BusProblem",
    "bus_hamiltonian",
    "bus_channel_operators",
    "bus_loss",
    "bus_evaluate",
    "bus_gradient",
    "TrainResult",
    "train_bbnn",
]

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "sin": (np.sin, np.cos),
}
_ACT_CODES = {"tanh": 0, "sin": 1}


@dataclass(frozen=True)
class Mlp:
    """Dense network with a flat parameter vector.

    ``sizes`` lists layer widths from input to output. Parameters are stored
    layer by layer, weights (``out x in``, row-major) before biases.
    """

    sizes: tuple
    params: np.ndarray
    activation: str = "sin"
    bound: float = 1.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        p = np.array(self.params, dtype=float).ravel()
        if p.size != self.n_params_for(sizes):
            raise ShapeError(f"{p.size} parameters for sizes {sizes}")
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite network parameters")
        p.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "params", p)

    @staticmethod
    def n_params_for(sizes):
        return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))

    @classmethod
    def create(cls, hidden_size, n_hidden_layers, *, input_size=1, output_size=1,
               activation="sin", bound=1.0, seed=0):
        """Randomly initialized network, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` per layer.

        There are ``n_hidden_layers + 1`` activated layers: the input layer
        followed by ``n_hidden_layers`` square hidden layers.
        """
        sizes = (input_size,) + (hidden_size,) * (n_hidden_layers + 1) + (output_size,)
        rng = np.random.default_rng(seed)
        chunks = []
        for i, o in zip(sizes[:-1], sizes[1:]):
            lim = 1.0 / np.sqrt(i)
            chunks.append(rng.uniform(-lim, lim, o * i))
            chunks.append(rng.uniform(-lim, lim, o))
        return cls(sizes, np.concatenate(chunks), activation, bound)

    def layers(self):
        """List of ``(W, b)`` views into ``params``."""
        out, pos = [], 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            w = self.params[pos:pos + o * i].reshape(o, i)
            pos += o * i
            b = self.params[pos:pos + o]
            pos += o
            out.append((w, b))
        return out

    def with_params(self, params):
        return replace(self, params=params)


def mlp_forward(net, t):
    """Evaluate the network on a batch of scalar inputs.

    Returns ``(outputs, cache)`` with outputs of shape ``(len(t), n_out)``
    clipped to ``[-bound, bound]``; ``cache`` feeds :func:`mlp_backward`.
    """
    act, _ = _ACTIVATIONS[net.activation]
    x = np.asarray(t, dtype=float).reshape(-1, net.sizes[0])
    inputs, pre = [], []
    layers = net.layers()
    for idx, (w, b) in enumerate(layers):
        inputs.append(x)
        z = x @ w.T + b
        pre.append(z)
        x = act(z) if idx < len(layers) - 1 else z
    out = np.clip(x, -net.bound, net.bound)
    return out, (inputs, pre)


def mlp_backward(net, cache, upstream):
    """Flat parameter gradient given ``d loss / d outputs``.

    Outputs beyond the clip bound pass no gradient.
    """
    _, dact = _ACTIVATIONS[net.activation]
    inputs, pre = cache
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != pre[-1].shape:
        raise ShapeError(f"upstream shape {upstream.shape} vs outputs {pre[-1].shape}")
    dz = upstream * (np.abs(pre[-1]) <= net.bound)
    layers = net.layers()
    grads = []
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        grads.append(dz.sum(axis=0))
        grads.append((dz.T @ inputs[idx]).ravel())
        if idx > 0:
            dz = (dz @ w) * dact(pre[idx - 1])
    return np.concatenate(grads[::-1])


_MAGIC = b"QDMLP\x00\x01\x00"


def save_mlp(net, path):
    """Write ``net`` as a little-endian binary file.

    Layout: 8-byte magic, ``uint32`` affine-layer count, ``uint32`` activation
    code (0 tanh, 1 sin), ``float64`` output bound, one ``(uint32 out, uint32
    in)`` pair per layer, then every parameter as ``float64``.
    """
    n_layers = len(net.sizes) - 1
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IId", n_layers, _ACT_CODES[net.activation], net.bound))
        for i, o in zip(net.sizes[:-1], net.sizes[1:]):
            fh.write(struct.pack("<II", o, i))
        fh.write(net.params.astype("<f8").tobytes())


def load_mlp(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path} is not a serialized network")
    n_layers, code, bound = struct.unpack_from("<IId", data, 8)
    pos = 8 + struct.calcsize("<IId")
    shapes = [struct.unpack_from("<II", data, pos + 8 * k) for k in range(n_layers)]
    pos += 8 * n_layers
    sizes = (shapes[0][1],) + tuple(o for o, _ in shapes)
    params = np.frombuffer(data, dtype="<f8", offset=pos).astype(float)
    activation = {v: k for k, v in _ACT_CODES.items()}[code]
    return Mlp(sizes, params, activation, bound)


# --- quantum bus ------------------------------------------------------------------

# initialization seeds for the default 4x150 network and two-session schedule,
# keyed by whether the Fock penalty is on and ordered best first. Measured GHZ
# fidelities: no penalty 0.965 / 0.948 / 0.893, penalty 0.981 / 0.962 / 0.500.
SHIPPED_SEEDS = {False: (2, 0, 1), True: (0, 1, 2)}

@dataclass(frozen=True)
class BusProblem:
    """Drive ``n_qubits`` qubits on a resonator bus toward the GHZ state.

    The Fock-penalty adds ``(weight / T) * sum_k dt * P(n >= cutoff)(t_k)`` to
    the loss, where ``P`` is the resonator population above the cutoff.
    """

    n_qubits: int = 3
    n_fock: int = 10
    grid: TimeGrid = field(default_factory=lambda: TimeGrid.arange(0.0, 8.0, 0.1))
    initial_qubits: tuple = (0, 1, 0)
    penalty: bool = False
    penalty_weight: float = 0.1
    cutoff: int = 2
    normalize_time: bool = False

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_fock < 1:
            raise ValueError("need at least one qubit and one Fock level")
        if len(self.initial_qubits) != self.n_qubits:
            raise ValueError("initial_qubits must list one basis index per qubit")
        if not 0 <= self.cutoff <= self.n_fock:
            raise ValueError("cutoff outside the Fock space")

    @property
    def dims(self):
        return 2 ** self.n_qubits * self.n_fock

    @property
    def product_dims(self):
        return (2,) * self.n_qubits + (self.n_fock,)

    @property
    def n_controls(self):
        return self.n_qubits + 1

    @property
    def duration(self):
        return len(self.grid) * self.grid.dt

    def network_inputs(self):
        t = self.grid.points
        return t / self.duration if self.normalize_time else t

    def initial_state(self):
        q = basis(2)
        factors = [q[i] for i in self.initial_qubits] + [basis(self.n_fock)[0]]
        return tensor_product_states(*factors)

    def target(self):
        """GHZ density matrix over the qubits."""
        amp = np.zeros(2 ** self.n_qubits, dtype=np.complex128)
        amp[0] = amp[-1] = 1.0 / np.sqrt(2.0)
        from .quantum import QuantumState
        return get_density_matrix(QuantumState(amp, (2,) * self.n_qubits))


def bus_channel_operators(n_fock, n_qubits=3):
    """The ``n_qubits + 1`` Hamiltonian terms multiplied by ``g_1..g_n, xi``."""
    a = annihilation(n_fock)
    ad = a.dagger()
    i2 = eye(2)
    ops = []
    for j in range(n_qubits):
        lower = [i2] * n_qubits
        raise_ = [i2] * n_qubits
        lower[j] = sigma_minus()
        raise_[j] = sigma_plus()
        term = tensor_product_ops(*lower, ad) + tensor_product_ops(*raise_, a)
        ops.append(term.matrix)
    ops.append(tensor_product_ops(*([i2] * n_qubits), a + ad).matrix)
    return np.stack(ops)


def bus_hamiltonian(controls, n_fock, n_qubits=3):
    controls = np.asarray(controls, dtype=float)
    if controls.shape != (n_qubits + 1,):
        raise ShapeError(f"expected {n_qubits + 1} controls, got {controls.shape}")
    return np.tensordot(controls, bus_channel_operators(n_fock, n_qubits), axes=1)


@lru_cache(maxsize=8)
def _bus_model(problem):
    chans = bus_channel_operators(problem.n_fock, problem.n_qubits)
    n_q = 2 ** problem.n_qubits
    target = problem.target().matrix
    proj_target = np.kron(target, np.eye(problem.n_fock))
    cav = np.zeros(problem.n_fock)
    cav[problem.cutoff:] = 1.0
    proj_cav = np.tile(cav, n_q)  # diagonal of I_qubits x P(n >= cutoff)
    psi0 = problem.initial_state().vector.copy()
    return chans.real.copy(), proj_target, proj_cav, psi0


def _controls(net, problem):
    u, cache = mlp_forward(net, problem.network_inputs())
    if u.shape[1] != problem.n_controls:
        raise ShapeError(f"network emits {u.shape[1]} controls, problem needs {problem.n_controls}")
    return u, cache


@dataclass
class BusEvaluation:
    loss: float
    fidelity: float
    penalty: float
    controls: np.ndarray
    fidelities: np.ndarray
    final_reduced: DensityMatrix


def bus_evaluate(net, problem):
    """Forward pass through :func:`qdyn.dynamics.tdse_analytic` with diagnostics."""
    u, _ = _controls(net, problem)
    chans, _, proj_cav, _ = _bus_model(problem)
    frames = np.einsum("kc,cab->kab", u, chans)
    h = DynamicOperator.from_frames(frames, problem.grid)
    traj = tdse_analytic(problem.initial_state(), h)
    target = problem.target()
    fids = []
    cav_pop = []
    for psi in traj:
        reduced = partial_trace(get_density_matrix(psi), [problem.n_qubits])
        fids.append(fidelity(reduced, target))
        cav_pop.append(float(np.sum(proj_cav * np.abs(psi.vector) ** 2)))
    penalty = 0.0
    if problem.penalty:
        penalty = problem.penalty_weight / problem.duration * problem.grid.dt * sum(cav_pop)
    final = partial_trace(get_density_matrix(traj.final), [problem.n_qubits])
    return BusEvaluation(1.0 - fids[-1] + penalty, fids[-1], penalty, u, np.array(fids), final)


def bus_loss(net, problem):
    return bus_evaluate(net, problem).loss


def _phi(mu):
    """Divided differences ``(e^mu_p - e^mu_q) / (mu_p - mu_q)`` for a stack of spectra."""
    e = np.exp(mu)
    delta = mu[..., :, None] - mu[..., None, :]
    small = np.abs(delta) < 1e-8
    safe = np.where(small, 1.0, delta)
    ratio = np.where(small, 1.0 + delta / 2.0 + delta ** 2 / 6.0, np.expm1(safe) / safe)
    return e[..., None, :] * ratio


def bus_gradient(net, problem):
    """Loss and its exact gradient with respect to ``net.params``.

    Each step exponential ``expm(-i H_k dt)`` is diagonalized (``H_k`` is real
    symmetric); its Frechet derivative in direction ``E`` is then
    ``V (Phi o (V^T E V)) V^T`` with ``Phi`` the divided differences of the
    exponentiated spectrum, which turns the per-step vector-Jacobian product
    into a few dense matrix products.
    """
    chans, proj_target, proj_cav, psi0 = _bus_model(problem)
    u, cache = _controls(net, problem)
    dt = problem.grid.dt
    n_steps = problem.grid.n_steps

    h = np.einsum("kc,cab->kab", u[:n_steps], chans)
    w, v = np.linalg.eigh(h)
    mu = -1j * dt / HBAR * w
    phase = np.exp(mu)

    psis = np.empty((n_steps + 1, psi0.size), dtype=np.complex128)
    psis[0] = psi0
    for k in range(n_steps):
        psis[k + 1] = v[k] @ (phase[k] * (v[k].T @ psis[k]))

    final = psis[-1]
    fid = float(np.real(np.vdot(final, proj_target @ final)))
    c_run = problem.penalty_weight / problem.duration * dt if problem.penalty else 0.0
    cav = np.sum(proj_cav * np.abs(psis) ** 2, axis=1)
    penalty = c_run * float(np.sum(cav))
    total = 1.0 - fid + penalty

    # adjoints chi_k = 2 dL/d conj(psi_k), accumulated backward
    chis = np.empty_like(psis)
    chi = -2.0 * (proj_target @ final) + 2.0 * c_run * proj_cav * final
    chis[-1] = chi
    for k in range(n_steps - 1, -1, -1):
        chi = v[k] @ (np.conj(phase[k]) * (v[k].T @ chi)) + 2.0 * c_run * proj_cav * psis[k]
        chis[k] = chi

    # dL/du_kc = Re <chi_k+1| D_k[-i dt H_c] |psi_k>
    a = np.einsum("kba,kb->ka", v, chis[1:])  # V^T chi (V real)
    b = np.einsum("kba,kb->ka", v, psis[:-1])
    wmat = _phi(mu) * (a.conj()[:, :, None] * b[:, None, :])
    kmat = v @ wmat @ np.swapaxes(v, 1, 2)
    du = np.zeros_like(u)
    du[:n_steps] = dt / HBAR * np.imag(np.einsum("crs,krs->kc", chans, kmat))
    return total, mlp_backward(net, cache, du)


@dataclass
class TrainResult:
    net: Mlp
    best_loss: float
    history: list
    final_net: Mlp

    @property
    def best_history(self):
        return list(np.minimum.accumulate(self.history)) if self.history else []


def train_bbnn(problem, net, sessions=((1e-3, 500), (1e-4, 500)), *, loss_threshold=1e-4,
               callback=None):
    """Adam training in consecutive ``(learning_rate, iterations)`` sessions.

    Each session starts a fresh optimizer. Training stops early once the loss
    falls below ``loss_threshold``. The best network seen is returned as
    ``net``; ``final_net`` is the last iterate.
    """
    params = net.params.copy()
    best = (np.inf, net)
    history = []
    stop = False
    for lr, iterations in sessions:
        if stop:
            break
        state = AdamState.zeros_like(params, lr=lr)
        for _ in range(int(iterations)):
            current = net.with_params(params)
            total, grad = bus_gradient(current, problem)
            history.append(total)
            if total < best[0]:
                best = (total, current)
            if callback is not None:
                callback(len(history), total)
            params, state = adam_step(state, params, grad)
            if total < loss_threshold:
                stop = True
                break
    final = net.with_params(params) if history else net
    if not history:
        best = (np.nan, net)
    return TrainResult(best[1], best[0], history, final)
