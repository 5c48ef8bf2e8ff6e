import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdyn import tensorcore as tc
from qdyn.errors import ShapeError

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)


def taylor_expm(a, terms=60):
    """Plain power series; only trusted for small norms."""
    out = np.eye(a.shape[0], dtype=complex)
    term = out.copy()
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


def rand_c(rng, n, m=None, scale=1.0):
    m = n if m is None else m
    return scale * (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m)))


seeds = st.integers(min_value=0, max_value=2**31 - 1)


def test_matmul_pauli_composition():
    np.testing.assert_allclose(tc.matmul(SX, SY), [[1j, 0], [0, -1j]])
    np.testing.assert_allclose(tc.matmul(SX, [[1], [0]]), [[0], [1]])


def test_matmul_identity_and_shape_error():
    m = rand_c(np.random.default_rng(0), 3)
    np.testing.assert_array_equal(tc.matmul(np.eye(3), m), m)
    with pytest.raises(ShapeError):
        tc.matmul(np.eye(2), np.eye(3))


def test_adjoint():
    np.testing.assert_array_equal(tc.adjoint(SY), SY)
    np.testing.assert_array_equal(tc.adjoint([[1], [0]]), [[1, 0]])
    m = rand_c(np.random.default_rng(1), 3, 2)
    np.testing.assert_array_equal(tc.adjoint(tc.adjoint(m)), m)


def test_kron_examples():
    plus = np.array([[1], [1]]) / np.sqrt(2)
    minus = np.array([[1], [-1]]) / np.sqrt(2)
    np.testing.assert_allclose(tc.kron(plus, minus).ravel(), [0.5, -0.5, 0.5, -0.5])
    np.testing.assert_array_equal(tc.kron(np.eye(2), np.eye(2)), np.eye(4))
    rho1 = plus @ plus.T
    rho2 = minus @ minus.T
    np.testing.assert_allclose(np.abs(tc.kron(rho1, rho2)), 0.25)
    np.testing.assert_allclose(tc.kron([[3.0]], SX), 3 * SX)


def test_kron_associative():
    rng = np.random.default_rng(2)
    a, b, c = rand_c(rng, 2), rand_c(rng, 3), rand_c(rng, 2)
    np.testing.assert_allclose(tc.kron(tc.kron(a, b), c), tc.kron(a, tc.kron(b, c)), atol=1e-12)


def test_trace():
    assert tc.trace(np.eye(5)) == 5
    assert tc.trace(SZ) == 0
    psi = rand_c(np.random.default_rng(3), 4, 1)
    psi /= np.linalg.norm(psi)
    assert tc.trace(psi @ psi.conj().T) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ShapeError):
        tc.trace(np.ones((2, 3)))


def test_partial_trace_product_state():
    plus = np.array([[1], [1]]) / np.sqrt(2)
    minus = np.array([[1], [-1]]) / np.sqrt(2)
    rho = tc.kron(plus @ plus.T, minus @ minus.T)
    np.testing.assert_allclose(tc.partial_trace_raw(rho, [2, 2], [1]), [[0.5, 0.5], [0.5, 0.5]])


def test_partial_trace_factorization_law():
    rng = np.random.default_rng(4)
    a, b = rand_c(rng, 2), rand_c(rng, 3)
    got = tc.partial_trace_raw(tc.kron(a, b), [2, 3], [1])
    np.testing.assert_allclose(got, np.trace(b) * a, atol=1e-12)
    got = tc.partial_trace_raw(tc.kron(a, b), [2, 3], [0])
    np.testing.assert_allclose(got, np.trace(a) * b, atol=1e-12)


def test_partial_trace_bell_state():
    bell = np.zeros((4, 1))
    bell[0] = bell[3] = 1 / np.sqrt(2)
    rho = bell @ bell.T
    # independent oracle: explicit index sum
    oracle = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            oracle[i, j] = sum(rho[2 * i + k, 2 * j + k] for k in range(2))
    np.testing.assert_allclose(oracle, np.eye(2) / 2)
    np.testing.assert_allclose(tc.partial_trace_raw(rho, [2, 2], [1]), oracle)
    np.testing.assert_allclose(tc.partial_trace_raw(rho, [2, 2], [0]), oracle)


def test_partial_trace_keeps_order_of_remaining_factors():
    rng = np.random.default_rng(5)
    a, b, c = rand_c(rng, 2), rand_c(rng, 3), rand_c(rng, 2)
    got = tc.partial_trace_raw(tc.kron(tc.kron(a, b), c), [2, 3, 2], [1])
    np.testing.assert_allclose(got, np.trace(b) * tc.kron(a, c), atol=1e-12)


def test_partial_trace_errors():
    with pytest.raises(ShapeError):
        tc.partial_trace_raw(np.eye(4), [2, 3], [0])
    with pytest.raises(ValueError):
        tc.partial_trace_raw(np.eye(4), [2, 2], [0, 0])
    with pytest.raises(ValueError):
        tc.partial_trace_raw(np.eye(4), [2, 2], [2])


def test_expm_examples():
    np.testing.assert_array_equal(tc.expm(np.zeros((3, 3))), np.eye(3))
    want = np.array([[0, -1j], [-1j, 0]])
    got = tc.expm(-1j * np.pi / 2 * SX)
    np.testing.assert_allclose(got, want, atol=1e-14)
    np.testing.assert_allclose(taylor_expm(-1j * np.pi / 2 * SX), want, atol=1e-13)
    np.testing.assert_allclose(tc.expm(np.diag([0.3, -2.0])), np.diag(np.exp([0.3, -2.0])),
                               rtol=1e-14)


def test_expm_matches_taylor_oracle():
    rng = np.random.default_rng(6)
    for n in (1, 2, 4, 7):
        a = rand_c(rng, n, scale=0.4)
        np.testing.assert_allclose(tc.expm(a), taylor_expm(a), atol=1e-12)


def test_expm_large_norm_inverse():
    rng = np.random.default_rng(7)
    a = rand_c(rng, 5, scale=3.0)
    prod = tc.expm(a) @ tc.expm(-a)
    np.testing.assert_allclose(prod, np.eye(5), atol=1e-8)


def test_expm_batched_matches_loop():
    rng = np.random.default_rng(8)
    stack = np.stack([rand_c(rng, 3, scale=s) for s in (0.01, 0.5, 4.0, 20.0)])
    got = tc.expm(stack)
    for a, g in zip(stack, got):
        np.testing.assert_allclose(g, tc.expm(a), rtol=1e-13, atol=1e-13)


def test_expm_hermitian_eig_path_agrees():
    rng = np.random.default_rng(9)
    h = rand_c(rng, 4)
    h = h + h.conj().T
    np.testing.assert_allclose(tc.expm(-1j * h, hermitian_eig=True), tc.expm(-1j * h), atol=1e-12)
    np.testing.assert_allclose(tc.expm(0.3 * h, hermitian_eig=True), tc.expm(0.3 * h), rtol=1e-11)


def test_expm_errors():
    with pytest.raises(ShapeError):
        tc.expm(np.ones((2, 3)))
    with pytest.raises(ValueError):
        tc.expm(np.array([[np.nan, 0], [0, 1]]))


def test_expm_degenerate_sizes():
    assert tc.expm(np.zeros((0, 0))).shape == (0, 0)
    np.testing.assert_allclose(tc.expm([[2.0]]), [[np.exp(2.0)]])


def test_frechet_zero_direction():
    a = rand_c(np.random.default_rng(10), 3)
    ea, d = tc.expm_frechet(a, np.zeros((3, 3)))
    np.testing.assert_allclose(ea, tc.expm(a), rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(d, 0)


def test_frechet_commuting_series_oracle():
    a = np.diag([0.2, -0.5, 1.1]).astype(complex)
    e = np.diag([1.0, 2.0, -0.3]).astype(complex)
    _, d = tc.expm_frechet(a, e)
    # term-by-term: sum_k (1/k!) sum_j a^j e a^(k-1-j) = expm(a) e when [a, e] = 0
    series = np.zeros((3, 3), dtype=complex)
    fact = 1.0
    for k in range(1, 40):
        fact *= k
        series += sum(np.linalg.matrix_power(a, j) @ e @ np.linalg.matrix_power(a, k - 1 - j)
                      for j in range(k)) / fact
    np.testing.assert_allclose(d, series, atol=1e-13)
    np.testing.assert_allclose(d, tc.expm(a) @ e, atol=1e-13)


def test_frechet_central_difference():
    rng = np.random.default_rng(11)
    a, e = rand_c(rng, 3), rand_c(rng, 3)
    _, d = tc.expm_frechet(a, e)
    h = 1e-6
    fd = (tc.expm(a + h * e) - tc.expm(a - h * e)) / (2 * h)
    assert np.linalg.norm(d - fd) / np.linalg.norm(d) <= 1e-6


def test_frechet_shape_mismatch():
    with pytest.raises(ShapeError):
        tc.expm_frechet(np.eye(2), np.eye(3))


def test_vec_examples():
    np.testing.assert_array_equal(tc.vec([[1, 0], [0, 0]]).ravel(), [1, 0, 0, 0])
    np.testing.assert_array_equal(tc.vec(SX).ravel(), [0, 1, 1, 0])
    m = rand_c(np.random.default_rng(12), 4)
    np.testing.assert_array_equal(tc.unvec(tc.vec(m), 4), m)
    with pytest.raises(ShapeError):
        tc.unvec(np.ones((5, 1)), 2)
    with pytest.raises(ShapeError):
        tc.vec(np.ones((2, 3)))


# --- properties ----------------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 5), st.floats(0.0, 10.0))
def test_prop_expm_inverse(seed, n, norm):
    rng = np.random.default_rng(seed)
    a = rand_c(rng, n)
    a *= norm / max(np.linalg.norm(a, 2), 1e-300)
    prod = tc.expm(a) @ tc.expm(-a)
    # relative to the conditioning of the pair; for ||a|| <= 10 both factors are O(e^10)
    assert np.max(np.abs(prod - np.eye(n))) <= 1e-10 * max(1.0, np.linalg.norm(tc.expm(a), 2)
                                                            * np.linalg.norm(tc.expm(-a), 2) / 1e2)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 6), st.floats(0.0, 10.0))
def test_prop_antihermitian_unitary(seed, n, norm):
    rng = np.random.default_rng(seed)
    h = rand_c(rng, n)
    h = (h + h.conj().T) / 2
    a = 1j * h * norm / max(np.linalg.norm(h, 2), 1e-300)
    u = tc.expm(a)
    assert np.max(np.abs(u.conj().T @ u - np.eye(n))) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from([2, 3]), st.sampled_from([2, 3]))
def test_prop_kron_mixed_product(seed, n, m):
    rng = np.random.default_rng(seed)
    a, c = rand_c(rng, n), rand_c(rng, n)
    b, d = rand_c(rng, m), rand_c(rng, m)
    lhs = tc.kron(a, b) @ tc.kron(c, d)
    np.testing.assert_allclose(lhs, tc.kron(a @ c, b @ d), atol=1e-12 * max(1, np.abs(lhs).max()))


@settings(max_examples=40, deadline=None)
@given(seeds, st.lists(st.integers(1, 3), min_size=1, max_size=3))
def test_prop_partial_trace_all_factors_is_trace(seed, dims):
    n = int(np.prod(dims))
    rho = rand_c(np.random.default_rng(seed), n)
    got = tc.partial_trace_raw(rho, dims, list(range(len(dims))))
    assert got.shape == (1, 1)
    assert abs(got[0, 0] - np.trace(rho)) <= 1e-12 * max(1, n)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4), st.floats(-3, 3), st.floats(-3, 3))
def test_prop_frechet_linear_in_direction(seed, n, alpha, beta):
    rng = np.random.default_rng(seed)
    a, e1, e2 = rand_c(rng, n), rand_c(rng, n), rand_c(rng, n)
    _, d = tc.expm_frechet(a, alpha * e1 + beta * e2)
    _, d1 = tc.expm_frechet(a, e1)
    _, d2 = tc.expm_frechet(a, e2)
    scale = max(1.0, np.abs(d).max())
    assert np.max(np.abs(d - (alpha * d1 + beta * d2))) <= 1e-10 * scale


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4))
def test_prop_vec_law(seed, n):
    rng = np.random.default_rng(seed)
    a, rho, b = rand_c(rng, n), rand_c(rng, n), rand_c(rng, n)
    lhs = tc.vec(a @ rho @ b)
    rhs = tc.kron(a, b.T) @ tc.vec(rho)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.abs(lhs).max())
