"""
Dense complex linear algebra used by every other module.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Columns stand in
for kets, ``(n, n)`` arrays for operators and ``(n*n, n*n)`` arrays for
superoperators. Vectorization is row-major, so that

    vec(A @ rho @ B) == kron(A, B.T) @ vec(rho)

which is the identity the Liouvillian builder relies on.
"""

import numpy as np

from .errors import ShapeError

__all__ = [
    "as_matrix",
    "matmul",
    "adjoint",
    "kron",
    "trace",
    "partial_trace_raw",
    "expm",
    "expm_frechet",
    "vec",
    "unvec",
]

# Pade(13) numerator coefficients and the 1-norm bound below which the
# approximant is accurate to double precision (Higham 2005).
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def as_matrix(a, *, name="matrix"):
    """Coerce ``a`` to a finite 2-D complex128 array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _square(a, name):
    m = as_matrix(a, name=name)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {m.shape}")
    return m


def matmul(a, b):
    a = as_matrix(a, name="a")
    b = as_matrix(b, name="b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def adjoint(a):
    """Conjugate transpose."""
    return as_matrix(a).conj().T


def kron(a, b):
    return np.kron(as_matrix(a, name="a"), as_matrix(b, name="b"))


def trace(a):
    return complex(np.trace(_square(a, "a")))


def partial_trace_raw(rho, factor_dims, trace_out):
    """Trace the listed tensor factors out of ``rho``.

    Parameters
    ----------
    rho : (n, n) array_like
        Operator on a product space with ``prod(factor_dims) == n``.
    factor_dims : sequence of int
        Dimensions of the tensor factors, in kron order.
    trace_out : sequence of int
        Indices into ``factor_dims`` to remove.

    Returns
    -------
    ndarray
        Reduced operator over the remaining factors, in their original order.
        Tracing out every factor gives a ``(1, 1)`` array holding ``trace(rho)``.
    """
    rho = _square(rho, "rho")
    dims = [int(d) for d in factor_dims]
    if any(d < 1 for d in dims):
        raise ValueError(f"factor dimensions must be positive, got {dims}")
    if int(np.prod(dims)) != rho.shape[0]:
        raise ShapeError(f"factor dims {dims} do not multiply to {rho.shape[0]}")
    out = [int(i) for i in trace_out]
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate factor index in {out}")
    if any(i < 0 or i >= len(dims) for i in out):
        raise ValueError(f"factor index out of range in {out} for {len(dims)} factors")

    k = len(dims)
    t = rho.reshape(dims + dims)
    # descending order keeps the remaining axis numbers valid
    for i in sorted(out, reverse=True):
        t = np.trace(t, axis1=i, axis2=i + k)
        k -= 1
    keep = [d for i, d in enumerate(dims) if i not in out]
    n = int(np.prod(keep)) if keep else 1
    return t.reshape(n, n)


def _pade13(a):
    """Return ``expm`` of a stack of matrices with small enough 1-norm."""
    b = _PADE13
    ident = np.broadcast_to(np.eye(a.shape[-1], dtype=a.dtype), a.shape)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (
        a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
        + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident
    )
    v = (
        a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
        + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    )
    return np.linalg.solve(v - u, v + u)


def expm(a, *, hermitian_eig=False):
    """Matrix exponential by scaling and squaring with a degree-13 Pade approximant.

    Accepts a single ``(n, n)`` matrix or a stack ``(..., n, n)``; stacks are
    handled in one vectorized pass with a per-matrix scaling exponent.

    If ``hermitian_eig`` is true and the input is Hermitian or anti-Hermitian
    (to 1e-12), the exponential is taken through ``numpy.linalg.eigh`` instead.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ShapeError(f"expm needs square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("expm input has non-finite entries")
    n = a.shape[-1]
    if n == 0:
        return a.copy()

    if hermitian_eig:
        ah = np.swapaxes(a, -1, -2).conj()
        if np.max(np.abs(a - ah), initial=0.0) <= 1e-12:
            w, v = np.linalg.eigh(a)
            return (v * np.exp(w)[..., None, :]) @ np.swapaxes(v, -1, -2).conj()
        if np.max(np.abs(a + ah), initial=0.0) <= 1e-12:
            # a = i*h with h Hermitian
            w, v = np.linalg.eigh(-1j * a)
            return (v * np.exp(1j * w)[..., None, :]) @ np.swapaxes(v, -1, -2).conj()

    batch = a.shape[:-2]
    stack = a.reshape((-1, n, n))
    norms = np.abs(stack).sum(axis=1).max(axis=1)
    with np.errstate(divide="ignore"):
        s = np.where(norms > _THETA13, np.ceil(np.log2(norms / _THETA13)), 0.0)
    s = s.astype(int)
    scaled = stack / (2.0 ** s)[:, None, None]
    x = _pade13(scaled)
    for i in range(int(s.max(initial=0))):
        sel = s > i
        x[sel] = x[sel] @ x[sel]
    x[norms == 0] = np.eye(n)  # exact identity rather than P/Q rounding
    return x.reshape(batch + (n, n))


def expm_frechet(a, e):
    """Exponential of ``a`` and its Frechet derivative in direction ``e``.

    Both come out of a single exponential of the block matrix
    ``[[a, e], [0, a]]``: the diagonal block is ``expm(a)`` and the upper-right
    block is the derivative. Stacks ``(..., n, n)`` are supported.

    Returns
    -------
    (expm_a, derivative)
    """
    a = np.asarray(a, dtype=np.complex128)
    e = np.asarray(e, dtype=np.complex128)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ShapeError(f"expm_frechet needs square matrices, got {a.shape}")
    if e.shape[-2:] != a.shape[-2:]:
        raise ShapeError(f"direction shape {e.shape} does not match {a.shape}")
    a, e = np.broadcast_arrays(a, e)
    n = a.shape[-1]
    big = np.zeros(a.shape[:-2] + (2 * n, 2 * n), dtype=np.complex128)
    big[..., :n, :n] = a
    big[..., n:, n:] = a
    big[..., :n, n:] = e
    x = expm(big)
    return x[..., :n, :n], x[..., :n, n:]


def vec(rho):
    """Row-major stacking of a square matrix into an ``(n*n, 1)`` column."""
    rho = _square(rho, "rho")
    return rho.reshape(-1, 1).copy()


def unvec(v, n):
    v = as_matrix(v, name="v")
    n = int(n)
    if v.shape != (n * n, 1):
        raise ShapeError(f"expected shape {(n * n, 1)}, got {v.shape}")
    return v.reshape(n, n).copy()
