import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdyn import tensorcore as tc
from qdyn.dynamics import (
    IntegratorConfig,
    LindbladSpec,
    build_liouvillian,
    fls_propagate,
    lindblad_integrate,
    lindblad_rhs,
    tdse_analytic,
    tdse_numeric,
)
from qdyn.errors import ConvergenceError, InvariantError, ShapeError
from qdyn.quantum import (
    DensityMatrix,
    DynamicOperator,
    Operator,
    QuantumState,
    TimeGrid,
    basis,
    expect_val_dm,
    get_density_matrix,
    normalize,
    sigma_minus,
    sigma_x,
    sigma_y,
    sigma_z,
)

RK45 = IntegratorConfig(method="rk45_adaptive", abs_tol=1e-10, rel_tol=1e-10)


def rand_herm(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a + a.conj().T) / 2


def rand_rho(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    m = a @ a.conj().T
    return DensityMatrix(m / np.trace(m).real)


def rabi_grid():
    return TimeGrid.uniform(0.0, 0.1, 101)


def test_tdse_analytic_rabi_closed_form():
    grid = rabi_grid()
    traj = tdse_analytic(basis(2)[0], DynamicOperator.constant(sigma_x(), grid))
    pops = np.array([np.abs(s.vector) ** 2 for s in traj])
    t = grid.points
    np.testing.assert_allclose(pops[:, 0], np.cos(t) ** 2, atol=1e-12)
    np.testing.assert_allclose(pops[:, 1], np.sin(t) ** 2, atol=1e-12)
    # full inversion at pi/2 on a grid that contains it
    g2 = TimeGrid.uniform(0.0, math.pi / 20, 11)
    final = tdse_analytic(basis(2)[0], DynamicOperator.constant(sigma_x(), g2)).final
    assert abs(final.vector[1]) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_tdse_trivial_cases():
    grid = TimeGrid.uniform(0.0, 0.3, 6)
    psi = normalize(QuantumState([[1], [2j], [0.5]]))
    traj = tdse_analytic(psi, DynamicOperator.constant(Operator(np.zeros((3, 3))), grid))
    for s in traj:
        np.testing.assert_array_equal(s.vector, psi.vector)
    traj = tdse_numeric(psi, DynamicOperator.constant(Operator(np.zeros((3, 3))), grid))
    for s in traj:
        np.testing.assert_array_equal(s.vector, psi.vector)
    traj = tdse_analytic(basis(2)[0], DynamicOperator.constant(sigma_z(), grid))
    for s in traj:
        np.testing.assert_allclose(np.abs(s.vector) ** 2, [1, 0], atol=1e-15)


def test_tdse_errors():
    grid = TimeGrid.uniform(0.0, 0.1, 4)
    h = DynamicOperator.constant(sigma_x(), grid)
    with pytest.raises(ShapeError):
        tdse_analytic(basis(2)[0], h, TimeGrid.uniform(0.0, 0.2, 4))
    with pytest.raises(ShapeError):
        tdse_analytic(basis(3)[0], h)
    with pytest.raises(ValueError):
        tdse_analytic(QuantumState([[1], [1]]), h)


def test_tdse_numeric_rabi():
    grid = rabi_grid()
    traj = tdse_numeric(basis(2)[0], DynamicOperator.constant(sigma_x(), grid))
    p2 = np.array([abs(s.vector[1]) ** 2 for s in traj])
    assert np.max(np.abs(p2 - np.sin(grid.points) ** 2)) <= 1e-6


@pytest.mark.parametrize("cfg", [IntegratorConfig(), RK45])
def test_tdse_numeric_matches_analytic_three_level(cfg):
    rng = np.random.default_rng(0)
    grid = TimeGrid.uniform(0.0, 0.05, 41)
    h = DynamicOperator.constant(Operator(rand_herm(rng, 3)), grid)
    psi = normalize(QuantumState(rng.standard_normal((3, 1)) + 0j))
    a = tdse_analytic(psi, h)
    b = tdse_numeric(psi, h, cfg=cfg)
    dev = max(np.max(np.abs(x.vector - y.vector)) for x, y in zip(a, b))
    assert dev <= 1e-8


def test_time_dependent_left_endpoint_convention():
    grid = TimeGrid.uniform(0.0, 0.1, 6)
    h = DynamicOperator.from_function(lambda t: (1 + t) * sigma_x(), grid)
    traj = tdse_analytic(basis(2)[0], h)
    angle = sum((1 + t) * 0.1 for t in grid.points[:-1])
    assert abs(traj.final.vector[1]) ** 2 == pytest.approx(math.sin(angle) ** 2, abs=1e-12)
    num = tdse_numeric(basis(2)[0], h)
    assert abs(num.final.vector[1]) ** 2 == pytest.approx(math.sin(angle) ** 2, abs=1e-9)


def test_rk45_underflow_raises():
    grid = TimeGrid.uniform(0.0, 1.0, 2)
    h = DynamicOperator.constant(Operator(1e9 * sigma_x().matrix), grid)
    cfg = IntegratorConfig(method="rk45_adaptive", abs_tol=1e-300, rel_tol=1e-300)
    with pytest.raises(ConvergenceError):
        tdse_numeric(basis(2)[0], h, cfg=cfg)


def test_integrator_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(substeps_per_dt=0)
    with pytest.raises(ValueError):
        IntegratorConfig(abs_tol=0)


def test_lindblad_spec_validation():
    grid = TimeGrid.uniform(0.0, 0.1, 3)
    h = DynamicOperator.constant(sigma_x(), grid)
    with pytest.raises(ValueError):
        LindbladSpec(h, (sigma_z(),), ())
    with pytest.raises(ValueError):
        LindbladSpec(h, (sigma_z(),), (-1.0,))
    with pytest.raises(ShapeError):
        LindbladSpec(h, (Operator(np.eye(3)),), (1.0,))


# --- rhs and Liouvillian ------------------------------------------------------------------------

def test_lindblad_rhs_examples():
    rng = np.random.default_rng(1)
    rho = rand_rho(rng, 3).matrix
    h = rand_herm(rng, 3)
    np.testing.assert_allclose(lindblad_rhs(rho, h, [np.eye(3)], [0.0]), -1j * (h @ rho - rho @ h))
    plus = np.full((2, 2), 0.5)
    np.testing.assert_allclose(lindblad_rhs(plus, np.zeros((2, 2)), [sigma_z()], [1.0]),
                               [[0, -1], [-1, 0]], atol=1e-15)
    np.testing.assert_allclose(lindblad_rhs(np.eye(3) / 3, h), 0, atol=1e-15)
    with pytest.raises(ShapeError):
        lindblad_rhs(np.eye(2), np.eye(3))


def test_liouvillian_examples():
    assert not np.any(build_liouvillian(np.zeros((3, 3))).matrix)
    ground = get_density_matrix(basis(2)[0]).matrix
    # sigma_minus maps index 0 to index 1 here, so |1><1| is its fixed point
    excited = get_density_matrix(basis(2)[1]).matrix
    lv = build_liouvillian(np.zeros((2, 2)), [sigma_minus()], [1.0])
    np.testing.assert_allclose(lv.apply(excited), 0, atol=1e-15)
    lv_up = build_liouvillian(np.zeros((2, 2)), [sigma_minus().dagger()], [1.0])
    np.testing.assert_allclose(lv_up.apply(ground), 0, atol=1e-15)
    plus = np.full((2, 2), 0.5)
    np.testing.assert_allclose(build_liouvillian(sigma_z()).apply(plus),
                               lindblad_rhs(plus, sigma_z().matrix), atol=1e-15)


def test_liouvillian_matches_rhs_random():
    rng = np.random.default_rng(2)
    n = 3
    h = rand_herm(rng, n)
    ls = [rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) for _ in range(2)]
    rates = [0.3, 1.7]
    rho = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    lv = build_liouvillian(h, ls, rates)
    np.testing.assert_allclose(lv.apply(rho), lindblad_rhs(rho, h, ls, rates), atol=1e-12)


# --- integrators --------------------------------------------------------------------------------

def dissipative_spec(dt=0.02, T=5.0):
    grid = TimeGrid.arange(0.0, T, dt)
    h = DynamicOperator.constant(math.pi * sigma_x(), grid)
    return LindbladSpec(h, (sigma_z(),), (0.25,)), grid


def test_dissipative_qubit_envelope_and_fine_oracle():
    spec, grid = dissipative_spec()
    rho0 = get_density_matrix(basis(2)[0])
    traj = lindblad_integrate(rho0, spec)
    sz = expect_val_dm(traj, sigma_z())
    t = grid.points
    assert np.max(np.abs(sz - np.exp(-0.25 * t) * np.cos(2 * np.pi * t))) <= 0.05
    fine = lindblad_integrate(rho0, spec, cfg=IntegratorConfig(substeps_per_dt=1000))
    dev = max(np.max(np.abs(a.matrix - b.matrix)) for a, b in zip(traj, fine))
    assert dev <= 1e-6
    for rho in traj:
        assert abs(np.trace(rho.matrix) - 1) <= 1e-6
        assert np.linalg.eigvalsh(rho.matrix).min() >= -1e-6


def test_closed_lindblad_matches_unitary_conjugation():
    rng = np.random.default_rng(3)
    grid = TimeGrid.uniform(0.0, 0.1, 21)
    h = rand_herm(rng, 3)
    rho0 = rand_rho(rng, 3)
    traj = lindblad_integrate(rho0, LindbladSpec(DynamicOperator.constant(Operator(h), grid)))
    for t, rho in traj.pairs():
        u = tc.expm(-1j * h * t)
        np.testing.assert_allclose(rho.matrix, u @ rho0.matrix @ u.conj().T, atol=1e-7)


def test_trace_drift_raises_invariant_error():
    grid = TimeGrid.uniform(0.0, 1.0, 3)
    h = DynamicOperator.constant(Operator(np.zeros((2, 2))), grid)
    spec = LindbladSpec(h, (sigma_minus(),), (1000.0,))
    with pytest.raises(InvariantError):
        lindblad_integrate(get_density_matrix(basis(2)[0]), spec,
                           cfg=IntegratorConfig(substeps_per_dt=1))


def test_fls_listing_scenario_matches_integrator():
    grid = TimeGrid.uniform(0.0, 0.1, 101)
    spec = LindbladSpec(DynamicOperator.constant(sigma_x(), grid), (sigma_x(),), (0.01 * 2 * math.pi,))
    rho0 = get_density_matrix(basis(2)[0])
    a, b = lindblad_integrate(rho0, spec), fls_propagate(rho0, spec)
    for x, y in zip(a, b):
        assert np.max(np.abs(np.diag(x.matrix).real - np.diag(y.matrix).real)) <= 1e-4
    sy_a, sy_b = expect_val_dm(a, sigma_y()), expect_val_dm(b, sigma_y())
    assert np.max(np.abs(sy_a - sy_b)) <= 1e-4


def test_fls_closed_system_matches_tdse():
    rng = np.random.default_rng(4)
    grid = TimeGrid.uniform(0.0, 0.2, 16)
    h = DynamicOperator.constant(Operator(rand_herm(rng, 3)), grid)
    psi = normalize(QuantumState(rng.standard_normal((3, 1)) + 1j * rng.standard_normal((3, 1))))
    pure = tdse_analytic(psi, h)
    fls = fls_propagate(get_density_matrix(psi), LindbladSpec(h))
    for s, rho in zip(pure, fls):
        np.testing.assert_allclose(rho.matrix, np.outer(s.vector, s.vector.conj()), atol=1e-9)


def test_fls_semigroup():
    rng = np.random.default_rng(5)
    h = rand_herm(rng, 2)
    T, n = 1.3, 13
    fine = TimeGrid.uniform(0.0, T / n, n + 1)
    coarse = TimeGrid.uniform(0.0, T, 2)
    rho0 = rand_rho(rng, 2)
    args = ((sigma_minus(), sigma_z()), (0.4, 0.2))
    a = fls_propagate(rho0, LindbladSpec(DynamicOperator.constant(Operator(h), fine), *args))
    b = fls_propagate(rho0, LindbladSpec(DynamicOperator.constant(Operator(h), coarse), *args))
    np.testing.assert_allclose(a.final.matrix, b.final.matrix, atol=1e-9)


def test_fls_time_dependent_chunks_match_stepwise():
    grid = TimeGrid.uniform(0.0, 0.05, 150)
    h = DynamicOperator.from_function(lambda t: math.cos(t) * sigma_x() + t * sigma_z(), grid)
    spec = LindbladSpec(h, (sigma_minus(),), (0.3,))
    rho0 = get_density_matrix(basis(2)[0])
    chunked = fls_propagate(rho0, spec, chunk=16)
    v = tc.vec(rho0.matrix)
    for k in range(grid.n_steps):
        lv = build_liouvillian(h.at(k), spec.jump_ops, spec.rates).matrix
        v = tc.expm(lv * grid.dt) @ v
    np.testing.assert_allclose(chunked.final.matrix, v.reshape(2, 2), atol=1e-12)


# --- properties ---------------------------------------------------------------------------------

seeds = st.integers(0, 2**31 - 1)


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(2, 4), st.integers(0, 2))
def test_prop_engines_agree(seed, n, n_jumps):
    rng = np.random.default_rng(seed)
    grid = TimeGrid.uniform(0.0, 0.1, 11)
    h = DynamicOperator.constant(Operator(rand_herm(rng, n)), grid)
    jumps = [Operator(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
             for _ in range(n_jumps)]
    rates = list(rng.uniform(0.0, 0.5, n_jumps))
    spec = LindbladSpec(h, jumps, rates)
    rho0 = rand_rho(rng, n)
    a = fls_propagate(rho0, spec)
    b = lindblad_integrate(rho0, spec, cfg=RK45)
    for x, y in zip(a, b):
        assert np.max(np.abs(x.matrix - y.matrix)) <= 1e-6
        assert abs(np.trace(x.matrix) - 1) <= 1e-6
        assert np.max(np.abs(x.matrix - x.matrix.conj().T)) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4), st.integers(0, 3))
def test_prop_liouvillian_trace_annihilation(seed, n, n_jumps):
    rng = np.random.default_rng(seed)
    jumps = [rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) for _ in range(n_jumps)]
    lv = build_liouvillian(rand_herm(rng, n), jumps, list(rng.uniform(0, 2, n_jumps))).matrix
    vec_i = tc.vec(np.eye(n))
    assert np.max(np.abs(vec_i.conj().T @ lv)) <= 1e-10 * max(1.0, np.abs(lv).max())


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 5), st.floats(0.001, 2.0))
def test_prop_tdse_norm_preserved(seed, n, dt):
    rng = np.random.default_rng(seed)
    grid = TimeGrid.uniform(0.0, dt, 20)
    frames = np.stack([rand_herm(rng, n) for _ in range(20)])
    psi = normalize(QuantumState(rng.standard_normal((n, 1)) + 1j * rng.standard_normal((n, 1))))
    traj = tdse_analytic(psi, DynamicOperator.from_frames(frames, grid))
    for s in traj:
        assert abs(np.linalg.norm(s.vector) - 1) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4))
def test_prop_rhs_traceless_and_hermitian(seed, n):
    rng = np.random.default_rng(seed)
    rho = rand_rho(rng, n).matrix
    jumps = [rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) for _ in range(2)]
    out = lindblad_rhs(rho, rand_herm(rng, n), jumps, [0.7, 0.2])
    assert abs(np.trace(out)) <= 1e-12 * max(1.0, np.abs(out).max())
    assert np.max(np.abs(out - out.conj().T)) <= 1e-12 * max(1.0, np.abs(out).max())
