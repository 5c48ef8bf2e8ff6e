"""
Qubit population-inversion environment and a cross-entropy policy search.

The environment drives ``H = (omega / 2) sigma_x`` for one ``dt`` per action,
propagating the density matrix exactly in Liouville space. The observation is
the interleaved real/imaginary parts of the 2x2 density matrix (8 floats,
row-major). Each step earns ``F - 1`` where ``F`` is the target population;
an episode ends when ``F`` reaches the threshold (earning the bonus) or the
step cap is hit.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import tensorcore as tc
from .dynamics import LindbladSpec, build_liouvillian, fls_propagate
from .errors import EpisodeDoneError, ShapeError
from .quantum import DensityMatrix, DynamicOperator, TimeGrid, basis, get_density_matrix, sigma_x

__all__ = [
    "EnvParams",
    "EnvState",
    "Transition",
    "RolloutResult",
    "CemResult",
    "encode_observation",
    "decode_observation",
    "reset",
    "step",
    "rollout",
    "rollout_batch",
    "cem_search",
    "export_actions_csv",
]


@dataclass(frozen=True)
class EnvParams:
    max_control: float = 1.0
    dims: int = 2
    dt: float = 0.04
    T: float = 4.0
    initial_state: int = 0
    target_state: int = 1
    max_steps: int = 100
    fidelity_threshold: float = 0.999
    bonus: float = 10.0
    reward_shape: str = "linear"

    def __post_init__(self):
        if self.dims != 2:
            raise ValueError("the qubit environment needs dims == 2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.reward_shape not in ("linear", "sqrt"):
            raise ValueError(f"unknown reward shape {self.reward_shape!r}")
        for idx in (self.initial_state, self.target_state):
            if not 0 <= idx < self.dims:
                raise ValueError(f"basis index {idx} out of range")


def encode_observation(rho):
    m = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho)
    return np.stack([m.real, m.imag], axis=-1).ravel()


def decode_observation(obs, dims=2):
    obs = np.asarray(obs, dtype=float).reshape(dims, dims, 2)
    return obs[..., 0] + 1j * obs[..., 1]


@dataclass(frozen=True)
class EnvState:
    rho: DensityMatrix
    step_count: int = 0
    done: bool = False

    @property
    def observation(self):
        return encode_observation(self.rho)


@dataclass(frozen=True)
class Transition:
    action: float
    reward: float
    done: bool
    observation: np.ndarray
    fidelity: float


def reset(params=EnvParams(), seed=None):
    """Initial state ``|initial><initial|``. The start is deterministic; ``seed`` is accepted for API parity."""
    rho = get_density_matrix(basis(params.dims)[params.initial_state])
    return EnvState(rho, 0, False)


def _reward(params, fid, done):
    reached = fid >= params.fidelity_threshold
    if params.reward_shape == "sqrt":
        root = np.sqrt(max(fid, 0.0))
        return root + params.bonus * reached if done else root - 1.0
    r = fid - 1.0
    if done and reached:
        r += params.bonus
    return r


def step(params, state, action):
    """Apply one control value for ``dt``; returns ``(Transition, EnvState)``."""
    if state.done:
        raise EpisodeDoneError("episode already terminated; call reset()")
    omega = float(np.clip(action, -params.max_control, params.max_control))
    grid = TimeGrid.uniform(0.0, params.dt, 2)
    h = DynamicOperator.constant((omega / 2.0) * sigma_x(), grid)
    rho = fls_propagate(state.rho, LindbladSpec(h), grid).final
    count = state.step_count + 1
    t = params.target_state
    fid = float(rho.matrix[t, t].real)
    done = fid >= params.fidelity_threshold or count >= params.max_steps
    reward = _reward(params, fid, done)
    new = EnvState(rho, count, done)
    return Transition(omega, reward, done, new.observation, fid), new


@dataclass
class RolloutResult:
    total_return: float
    final_fidelity: float
    steps_used: int
    done: bool
    rewards: list = field(default_factory=list)
    fidelities: list = field(default_factory=list)
    actions: list = field(default_factory=list)


def rollout(params, actions):
    """Play ``actions`` from reset until the episode ends or the sequence runs out."""
    actions = list(actions)
    if len(actions) > params.max_steps:
        raise ShapeError(f"{len(actions)} actions exceed max_steps={params.max_steps}")
    state = reset(params)
    res = RolloutResult(0.0, float(state.rho.matrix[params.target_state, params.target_state].real),
                        0, False)
    for a in actions:
        tr, state = step(params, state, a)
        res.rewards.append(tr.reward)
        res.fidelities.append(tr.fidelity)
        res.actions.append(tr.action)
        if state.done:
            break
    res.total_return = float(sum(res.rewards))
    res.steps_used = state.step_count
    res.done = state.done
    if res.fidelities:
        res.final_fidelity = res.fidelities[-1]
    return res


def rollout_batch(params, actions):
    """Vectorized :func:`rollout` over a population of full-length sequences.

    Returns ``(returns, final_fidelities, steps_used)``, each of length ``P``.
    """
    acts = np.clip(np.asarray(actions, dtype=float), -params.max_control, params.max_control)
    if acts.ndim != 2 or acts.shape[1] > params.max_steps:
        raise ShapeError(f"actions must be (P, <= {params.max_steps}), got {acts.shape}")
    n_pop, n_act = acts.shape
    unit = build_liouvillian(0.5 * sigma_x().matrix).matrix * params.dt
    rho0 = reset(params).rho.matrix
    v = np.tile(tc.vec(rho0)[:, 0], (n_pop, 1))
    t = params.target_state
    t_idx = t * params.dims + t
    returns = np.zeros(n_pop)
    fids = np.full(n_pop, rho0[t, t].real)
    steps = np.zeros(n_pop, dtype=int)
    alive = np.ones(n_pop, dtype=bool)
    for k in range(n_act):
        if not alive.any():
            break
        props = tc.expm(acts[alive, k, None, None] * unit)
        v[alive] = np.einsum("pab,pb->pa", props, v[alive])
        f = v[alive, t_idx].real
        count = k + 1
        reached = f >= params.fidelity_threshold
        done = reached | (count >= params.max_steps)
        if params.reward_shape == "sqrt":
            root = np.sqrt(np.maximum(f, 0.0))
            r = np.where(done, root + params.bonus * reached, root - 1.0)
        else:
            r = f - 1.0 + params.bonus * (done & reached)
        returns[alive] += r
        fids[alive] = f
        steps[alive] = count
        idx = np.flatnonzero(alive)
        alive[idx[done]] = False
    return returns, fids, steps


@dataclass
class CemResult:
    best_actions: np.ndarray
    best_return: float
    best_fidelity: float
    best_steps: int
    return_history: list
    std_history: list
    mean: np.ndarray
    elites: np.ndarray
    elite_steps: np.ndarray

    def pulse_area(self, dt):
        return float(np.sum(self.best_actions[:self.best_steps]) * dt)


def cem_search(params=EnvParams(), population=64, elite_frac=0.125, iterations=50, seed=0,
               init_std=0.5, init_mean=0.0, extra_noise=0.25):
    """Cross-entropy search over full-length action sequences.

    Each round samples ``population`` Gaussian sequences (clipped to the
    control bound when played), keeps the top ``elite_frac`` by return and
    refits the per-step mean and standard deviation to them. ``iterations``
    counts refits; with ``iterations=0`` the best of the first population is
    returned. ``std_history[i]`` is the per-step spread of the played (clipped)
    elite actions in round ``i``, averaged over steps.

    ``extra_noise`` is a variance added to every refit, decaying linearly to
    zero over the run. Without it the 100-dimensional search collapses long
    before the mean reaches the control bound; set it to 0 for plain CEM.
    """
    if population < 8:
        raise ValueError("population must be at least 8")
    if not 0.0 < elite_frac < 1.0:
        raise ValueError("elite_frac must lie in (0, 1)")
    if extra_noise < 0:
        raise ValueError("extra_noise must be non-negative")
    rng = np.random.default_rng(seed)
    n = params.max_steps
    n_elite = max(1, int(round(population * elite_frac)))
    mean = np.full(n, float(init_mean))
    std = np.full(n, float(init_std))
    best = (-np.inf, None, 0.0, 0)
    returns_hist, std_hist = [], []
    elites = elite_steps = None
    for it in range(int(iterations) + 1):
        samples = mean + std * rng.standard_normal((population, n))
        played = np.clip(samples, -params.max_control, params.max_control)
        rets, fids, steps = rollout_batch(params, played)
        order = np.argsort(-rets, kind="stable")
        top = order[:n_elite]
        std_hist.append(float(played[top].std(axis=0).mean()))
        returns_hist.append(float(rets[order[0]]))
        if rets[order[0]] > best[0]:
            i = order[0]
            best = (float(rets[i]), played[i].copy(), float(fids[i]), int(steps[i]))
        elites, elite_steps = played[top], steps[top]
        if it < iterations:
            mean = samples[top].mean(axis=0)
            decay = max(0.0, 1.0 - it / max(iterations, 1))
            std = np.sqrt(samples[top].var(axis=0) + extra_noise * decay) + 1e-6
    return CemResult(best[1], best[0], best[2], best[3], returns_hist, std_hist, mean,
                     elites, elite_steps)


def export_actions_csv(params, actions, path):
    """Replay ``actions`` and write ``step, omega, reward, fidelity`` rows."""
    res = rollout(params, actions)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "omega", "reward", "fidelity"])
        for k, (a, r, f) in enumerate(zip(res.actions, res.rewards, res.fidelities), start=1):
            w.writerow([k, repr(float(a)), repr(float(r)), repr(float(f))])
    return res
