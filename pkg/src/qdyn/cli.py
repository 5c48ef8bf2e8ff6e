"""
``qdyn`` command line: reproducible scenario runs that write CSV tables,
a JSON summary and (optionally) SVG plots.

    qdyn list
    qdyn run rabi --out results --plots
    qdyn run grape-qubit --set iterations=500 --seed 7
    qdyn run quantum-bus --config bus.json --set penalty=true

Exit status is 0 when the scenario's pass condition holds, 1 when it does not
(the failing metric is named on stderr) and 2 for usage errors.
"""

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn
from . import grape, neuralctl, rlenv
from .quantum import (
    DynamicOperator,
    TimeGrid,
    annihilation,
    basis,
    coherent,
    creation,
    eye,
    expect_val_dm,
    get_density_matrix,
    parity,
    sigma_minus,
    sigma_plus,
    sigma_x,
    sigma_y,
    sigma_z,
    tensor_product_ops,
    tensor_product_states,
)
from .svgplot import emit_plot

__all__ = ["SCENARIOS", "UsageError", "ScenarioConfig", "component_seeds", "run_scenario", "main"]


class UsageError(Exception):
    """Bad scenario name, override key or value."""


def _positive(v):
    return v > 0


def _non_negative(v):
    return v >= 0


def _unit(v):
    return 0 < v < 1


def _any(v):
    return True


# name -> (default, type, validator)
_PARAMS = {
    "rabi": {"T": (10.0, float, _positive), "dt": (0.1, float, _positive)},
    "dissipative-qubit": {
        "T": (5.0, float, _positive),
        "dt": (0.02, float, _positive),
        "gamma": (0.25, float, _non_negative),
        "delta": (2 * math.pi, float, _any),
    },
    "fls-check": {
        "T": (10.0, float, _positive),
        "dt": (0.1, float, _positive),
        "gamma": (0.01 * 2 * math.pi, float, _non_negative),
    },
    "jaynes-cummings": {
        "T": (40.0, float, _positive),
        "dt": (0.1, float, _positive),
        "N_fock": (50, int, lambda v: v >= 2),
        "g": (1.0, float, _any),
        "alpha_sq": (20.0, float, _non_negative),
        "wc": (0.1, float, _any),
        "wa": (0.1, float, _any),
    },
    "grape-qubit": {
        "T": (3.15, float, _positive),
        "n_steps": (100, int, _positive),
        "iterations": (2000, int, _non_negative),
        "lr": (1e-3, float, _positive),
        "l2_weight": (1e-3, float, _non_negative),
        "bound": (1.0, float, _positive),
    },
    "rl-qubit": {
        "population": (64, int, lambda v: v >= 8),
        "elite_frac": (0.125, float, _unit),
        "iterations": (50, int, _non_negative),
        "init_std": (0.5, float, _positive),
        "extra_noise": (0.25, float, _non_negative),
        "reward_shape": ("linear", str, lambda v: v in ("linear", "sqrt")),
    },
    "quantum-bus": {
        "N_fock": (10, int, lambda v: v >= 2),
        "T": (8.0, float, _positive),
        "dt": (0.1, float, _positive),
        "hidden_size": (150, int, _positive),
        "n_hidden_layers": (4, int, _non_negative),
        "iterations_1": (500, int, _non_negative),
        "iterations_2": (500, int, _non_negative),
        "lr_1": (1e-3, float, _positive),
        "lr_2": (1e-4, float, _positive),
        "penalty": (False, bool, _any),
        "penalty_weight": (0.1, float, _non_negative),
        "cutoff": (2, int, _non_negative),
        "normalize_time": (False, bool, _any),
    },
}

SCENARIOS = tuple(_PARAMS)

# per-scenario defaults used when no --seed is given
_DEFAULT_SEEDS = {"grape-qubit": 123987456, "rl-qubit": 0}


@dataclass
class ScenarioConfig:
    scenario: str
    params: dict
    seed: int | None = None
    out_dir: str = "."
    emit_plots: bool = False


def _coerce(kind, raw):
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)
    if kind is int:
        if isinstance(raw, float) and not raw.is_integer():
            raise ValueError(raw)
        return int(raw)
    return kind(raw)


def resolve_params(scenario, overrides):
    """Merge ``overrides`` into the scenario defaults, validating names and ranges."""
    if scenario not in _PARAMS:
        raise UsageError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    spec = _PARAMS[scenario]
    params = {k: v[0] for k, v in spec.items()}
    for key, raw in overrides.items():
        if key not in spec:
            raise UsageError(f"{scenario}: unknown parameter {key!r} (known: {', '.join(spec)})")
        _, kind, ok = spec[key]
        try:
            value = _coerce(kind, raw)
        except (TypeError, ValueError):
            raise UsageError(f"{scenario}: {key}={raw!r} is not a valid {kind.__name__}") from None
        if not ok(value):
            raise UsageError(f"{scenario}: {key}={value!r} out of range")
        params[key] = value
    return params


def component_seeds(root, n):
    """Split one root seed into ``n`` independent integer seeds."""
    children = np.random.SeedSequence(root).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def _write_csv(path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _round6(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return float(f"{v:.6g}") if math.isfinite(v) else v


@dataclass
class _Outcome:
    header: list
    columns: list
    metrics: dict
    checks: dict          # metric name -> passed
    plot_columns: tuple = ()
    seed: int | None = None
    extra: tuple = ()     # (suffix, header, columns) written alongside the main CSV


# --- scenarios ------------------------------------------------------------------------------

def _grid_inclusive(T, dt):
    return TimeGrid.uniform(0.0, dt, int(round(T / dt)) + 1)


def _rabi(p, seed, out):
    grid = _grid_inclusive(p["T"], p["dt"])
    h = DynamicOperator.constant(sigma_x(), grid)
    traj = dyn.tdse_analytic(basis(2)[0], h)
    pops = np.array([np.abs(s.vector) ** 2 for s in traj])
    t = grid.points
    dev = float(np.max(np.abs(pops[:, 1] - np.sin(t) ** 2)))
    return _Outcome(["t", "P1", "P2"], [t, pops[:, 0], pops[:, 1]],
                    {"max_dev_sin2": dev}, {"max_dev_sin2": dev <= 1e-9}, ("P1", "P2"))


def _dissipative(p, seed, out):
    grid = TimeGrid.arange(0.0, p["T"], p["dt"])
    rho0 = get_density_matrix(basis(2)[0])
    spec = dyn.LindbladSpec(DynamicOperator.constant((p["delta"] / 2) * sigma_x(), grid),
                            (sigma_z(),), (p["gamma"],))
    traj = dyn.lindblad_integrate(rho0, spec)
    fine = dyn.lindblad_integrate(rho0, spec, cfg=dyn.IntegratorConfig(substeps_per_dt=100))
    sz = expect_val_dm(traj, sigma_z())
    sz_fine = expect_val_dm(fine, sigma_z())
    t = grid.points
    approx = np.exp(-p["gamma"] * t) * np.cos(2 * np.pi * t)
    dev = float(np.max(np.abs(sz - approx)))
    dev_fine = float(np.max(np.abs(sz - sz_fine)))
    return _Outcome(["t", "Sz", "Sz_approx"], [t, sz, approx],
                    {"max_dev_envelope": dev, "max_dev_fine_rk4": dev_fine},
                    {"max_dev_envelope": dev <= 0.05, "max_dev_fine_rk4": dev_fine <= 1e-6},
                    ("Sz", "Sz_approx"))


def _fls_check(p, seed, out):
    grid = _grid_inclusive(p["T"], p["dt"])
    rho0 = get_density_matrix(basis(2)[0])
    spec = dyn.LindbladSpec(DynamicOperator.constant(sigma_x(), grid), (sigma_x(),), (p["gamma"],))
    me = dyn.lindblad_integrate(rho0, spec)
    fls = dyn.fls_propagate(rho0, spec)
    m1 = np.array([r.matrix for r in me])
    m2 = np.array([r.matrix for r in fls])
    sy1, sy2 = expect_val_dm(me, sigma_y()), expect_val_dm(fls, sigma_y())
    dev_pop = float(np.max(np.abs(m1[:, [0, 1], [0, 1]].real - m2[:, [0, 1], [0, 1]].real)))
    dev_sy = float(np.max(np.abs(sy1 - sy2)))
    t = grid.points
    cols = [t, m1[:, 0, 0].real, m1[:, 1, 1].real, m2[:, 0, 0].real, m2[:, 1, 1].real, sy1, sy2]
    return _Outcome(["t", "P1_me", "P2_me", "P1_fls", "P2_fls", "Sy_me", "Sy_fls"], cols,
                    {"max_dev_populations": dev_pop, "max_dev_sigma_y": dev_sy},
                    {"max_dev_populations": dev_pop <= 1e-4, "max_dev_sigma_y": dev_sy <= 1e-4},
                    ("P2_me", "P2_fls", "Sy_me", "Sy_fls"))


def jaynes_cummings_run(T=40.0, dt=0.1, N_fock=50, g=1.0, alpha_sq=20.0, wc=0.1, wa=0.1):
    """Resonant JC dynamics from a coherent field and the atom in ``basis(2)[0]``.

    Returns ``(t, W, parity)`` with ``W = <I x sigma_z>`` and the photon parity.
    """
    grid = TimeGrid.arange(0.0, T, dt)
    a, ad = annihilation(N_fock), creation(N_fock)
    h = (tensor_product_ops(eye(N_fock), -(wa / 2) * sigma_z())
         + tensor_product_ops(wc * (ad @ a), eye(2))
         + g * (tensor_product_ops(a, sigma_plus()) + tensor_product_ops(ad, sigma_minus())))
    psi0 = tensor_product_states(coherent(N_fock, math.sqrt(alpha_sq)), basis(2)[0])
    spec = dyn.LindbladSpec(DynamicOperator.constant(h, grid))
    traj = dyn.lindblad_integrate(get_density_matrix(psi0), spec)
    w = expect_val_dm(traj, tensor_product_ops(eye(N_fock), sigma_z()))
    par = expect_val_dm(traj, tensor_product_ops(parity(N_fock), eye(2)))
    return grid.points, w, par


def jc_metrics(t, w, par):
    """Collapse depth, revival peak and mid-collapse parity zero crossings."""
    collapse = (t >= 3) & (t <= 15)
    revival = (t >= 25) & (t <= 31)
    mid = (t >= 10) & (t <= 20)
    p = par[mid]
    return {
        "collapse_min_envelope": _envelope_min(t, w, 3.0, 15.0),
        "collapse_max_abs_W": float(np.max(np.abs(w[collapse]))),
        "revival_peak": float(np.max(np.abs(w[revival]))),
        "revival_time": float(t[revival][np.argmax(np.abs(w[revival]))]),
        "parity_crossings": int(np.count_nonzero(np.signbit(p[1:]) != np.signbit(p[:-1]))),
    }


def _envelope_min(t, w, lo, hi, window=1.0):
    """Smallest running max of ``|w|`` over sliding windows inside ``[lo, hi]``."""
    best = np.inf
    for start in t[(t >= lo) & (t <= hi - window)]:
        sel = (t >= start) & (t <= start + window)
        best = min(best, float(np.max(np.abs(w[sel]))))
    return best


def _jc(p, seed, out):
    t, w, par = jaynes_cummings_run(**p)
    m = jc_metrics(t, w, par)
    checks = {"collapse_min_envelope": m["collapse_min_envelope"] < 0.15,
              "revival_peak": m["revival_peak"] >= 0.3,
              "parity_crossings": m["parity_crossings"] >= 10}
    return _Outcome(["t", "W", "parity"], [t, w, par], m, checks, ("W", "parity"))


def _grape(p, seed, out):
    seed = _DEFAULT_SEEDS["grape-qubit"] if seed is None else component_seeds(seed, 1)[0]
    prob = grape.qubit_inversion_problem(T=p["T"], n_steps=p["n_steps"], l2_weight=p["l2_weight"])
    res = grape.optimize(prob, seed, iterations=p["iterations"], lr=p["lr"], bound=p["bound"])
    it = np.arange(1, len(res.history) + 1)
    amps = res.schedule.amplitudes()
    t_mid = prob.grid.points[:-1]
    metrics = {"fidelity": res.fidelity, "best_loss": res.best_loss, "iterations": res.iterations}
    return _Outcome(["iteration", "loss", "infidelity"],
                    [it, np.array(res.history), np.array(res.infidelity_history)],
                    metrics, {"fidelity": res.fidelity >= 0.999}, ("loss", "infidelity"), seed,
                    extra=(("pulse", ["t", "omega", "delta"], [t_mid, amps[:, 0], amps[:, 1]]),))


def _rl(p, seed, out):
    seed = _DEFAULT_SEEDS["rl-qubit"] if seed is None else component_seeds(seed, 1)[0]
    params = rlenv.EnvParams(reward_shape=p["reward_shape"])
    res = rlenv.cem_search(params, p["population"], p["elite_frac"], p["iterations"], seed,
                           init_std=p["init_std"], extra_noise=p["extra_noise"])
    replay = rlenv.rollout(params, res.best_actions)
    area = abs(res.pulse_area(params.dt))
    sat = float(np.mean([np.abs(e[:n]).mean() for e, n in zip(res.elites, res.elite_steps)]))
    metrics = {"fidelity": replay.final_fidelity, "steps": replay.steps_used,
               "return": replay.total_return, "pulse_area_over_pi": area / math.pi,
               "elite_saturation": sat}
    checks = {"fidelity": replay.final_fidelity >= params.fidelity_threshold,
              "pulse_area_over_pi": abs(area - math.pi) <= 0.05 * math.pi,
              "elite_saturation": sat >= 0.95 * params.max_control}
    k = np.arange(1, replay.steps_used + 1)
    return _Outcome(["step", "omega", "reward", "fidelity"],
                    [k, np.array(replay.actions), np.array(replay.rewards),
                     np.array(replay.fidelities)],
                    metrics, checks, ("omega", "fidelity"), seed)


def _bus(p, seed, out):
    if seed is None:
        seed = neuralctl.SHIPPED_SEEDS[bool(p["penalty"])][0]
    else:
        seed = component_seeds(seed, 1)[0]
    problem = neuralctl.BusProblem(
        n_fock=p["N_fock"], grid=TimeGrid.arange(0.0, p["T"], p["dt"]), penalty=p["penalty"],
        penalty_weight=p["penalty_weight"], cutoff=p["cutoff"],
        normalize_time=p["normalize_time"])
    net = neuralctl.Mlp.create(p["hidden_size"], p["n_hidden_layers"],
                               output_size=problem.n_controls, seed=seed)
    res = neuralctl.train_bbnn(problem, net, ((p["lr_1"], p["iterations_1"]),
                                              (p["lr_2"], p["iterations_2"])))
    ev = neuralctl.bus_evaluate(res.net, problem)
    neuralctl.save_mlp(res.net, os.path.join(out, "quantum-bus.mlp"))
    need = 0.97 if p["penalty"] else 0.95
    metrics = {"fidelity": ev.fidelity, "penalty": ev.penalty, "best_loss": res.best_loss,
               "iterations": len(res.history)}
    t = problem.grid.points
    u = ev.controls
    names = [f"g{j + 1}" for j in range(problem.n_qubits)] + ["xi"]
    it = np.arange(1, len(res.history) + 1)
    return _Outcome(["t", *names, "fidelity"], [t, *u.T, ev.fidelities], metrics,
                    {"fidelity": ev.fidelity >= need}, tuple(names), seed,
                    extra=(("history", ["iteration", "loss"], [it, np.array(res.history)]),))


_RUNNERS = {
    "rabi": _rabi,
    "dissipative-qubit": _dissipative,
    "fls-check": _fls_check,
    "jaynes-cummings": _jc,
    "grape-qubit": _grape,
    "rl-qubit": _rl,
    "quantum-bus": _bus,
}


def run_scenario(config):
    """Run one scenario, write its artifacts and return ``(passed, summary, failed_checks)``."""
    if config.scenario not in _RUNNERS:
        raise UsageError(f"unknown scenario {config.scenario!r}")
    os.makedirs(config.out_dir, exist_ok=True)
    start = time.perf_counter()
    res = _RUNNERS[config.scenario](config.params, config.seed, config.out_dir)
    elapsed = time.perf_counter() - start
    stem = os.path.join(config.out_dir, config.scenario)
    _write_csv(stem + ".csv", res.header, res.columns)
    for suffix, header, cols in res.extra:
        _write_csv(f"{stem}.{suffix}.csv", header, cols)
    passed = all(res.checks.values())
    summary = {
        "scenario": config.scenario,
        "seed": res.seed if res.seed is not None else config.seed,
        "metrics": {k: _round6(v) for k, v in res.metrics.items()},
        "pass": bool(passed),
        "elapsed_s": round(elapsed, 3),
    }
    with open(stem + ".summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=False)
        fh.write("\n")
    if config.emit_plots and res.plot_columns:
        emit_plot(stem + ".csv", list(res.plot_columns), stem + ".svg", title=config.scenario)
    failed = [k for k, ok in res.checks.items() if not ok]
    return passed, summary, failed


def _parse_set(items):
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="qdyn", description="Quantum dynamics and control scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario")
    run.add_argument("--config", help="JSON file of parameter overrides")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override one parameter (repeatable; wins over --config)")
    run.add_argument("--seed", type=int, default=None, help="root seed split across components")
    run.add_argument("--out", default=".", help="output directory")
    run.add_argument("--plots", action="store_true", help="also write an SVG plot")
    sub.add_parser("list", help="list scenarios and their parameters")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "list":
        for name in SCENARIOS:
            defaults = ", ".join(f"{k}={v[0]!r}" for k, v in _PARAMS[name].items())
            print(f"{name}: {defaults}")
        return 0
    try:
        overrides = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    loaded = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {args.config}: {exc}") from None
            if not isinstance(loaded, dict):
                raise UsageError("config file must hold a JSON object")
            overrides.update(loaded)
        overrides.update(_parse_set(args.set))
        params = resolve_params(args.scenario, overrides)
    except UsageError as exc:
        print(f"qdyn: error: {exc}", file=sys.stderr)
        return 2
    config = ScenarioConfig(args.scenario, params, args.seed, args.out, args.plots)
    passed, summary, failed = run_scenario(config)
    print(json.dumps(summary))
    if not passed:
        print(f"qdyn: {args.scenario} failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
