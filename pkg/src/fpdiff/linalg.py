"""Dense linear algebra kernel: pivoted solves and the spectral norm.

Everything operates on float64 numpy arrays.  All functions are pure,
deterministic and single-threaded, so results are bitwise reproducible
across runs and safe to call concurrently.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NotPositiveDefiniteError, SingularMatrixError

PIVOT_RTOL = 1e-14
NORM_RTOL = 1e-10
NORM_MAX_ITER = 10_000


def as_vector(data) -> np.ndarray:
    """Coerce to a finite, nonempty float64 1-d array."""
    v = np.ascontiguousarray(data, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a nonempty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def as_matrix(data) -> np.ndarray:
    """Coerce to a finite, nonempty float64 2-d array (row-major)."""
    a = np.ascontiguousarray(data, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a nonempty 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def lu_factor(a) -> tuple[np.ndarray, np.ndarray]:
    """LU factorization with partial pivoting, packed in a single matrix.

    Returns (lu, perm) where lu holds the unit-lower and upper factors and
    perm is the row permutation applied to the input.  Raises
    SingularMatrixError when the best available pivot falls below
    PIVOT_RTOL * max|a_ij|.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ValueError(f"lu_factor needs a square matrix, got {a.shape}")
    lu = a.copy()
    perm = np.arange(n)
    threshold = PIVOT_RTOL * float(np.max(np.abs(a)))
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        pivot = abs(lu[p, k])
        if pivot <= threshold:
            raise SingularMatrixError(
                f"pivot {pivot:.3e} below {threshold:.3e} at column {k}"
            )
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        if k + 1 < n:
            lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, perm


def lu_solve_factored(lu: np.ndarray, perm: np.ndarray, b) -> np.ndarray:
    """Solve with an existing lu_factor result; b is a vector or matrix."""
    b = np.asarray(b, dtype=np.float64)
    vector_rhs = b.ndim == 1
    x = b[perm].reshape(lu.shape[0], -1).copy()
    n = lu.shape[0]
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i] -= lu[i, i + 1 :] @ x[i + 1 :]
        x[i] /= lu[i, i]
    return x[:, 0] if vector_rhs else x


def lu_solve(a, b) -> np.ndarray:
    """Solve a @ x = b by LU with partial pivoting.

    b may be a vector of length n or an n-by-p block of right-hand sides.
    """
    lu, perm = lu_factor(a)
    return lu_solve_factored(lu, perm, b)


def cholesky_factor(a) -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix.

    Raises NotPositiveDefiniteError on a non-positive diagonal pivot.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ValueError(f"cholesky_factor needs a square matrix, got {a.shape}")
    scale = float(np.max(np.abs(a)))
    if float(np.max(np.abs(a - a.T))) > 1e-8 * max(scale, 1.0):
        raise ValueError("cholesky_factor needs a symmetric matrix")
    low = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if d <= 0.0 or not math.isfinite(d):
            raise NotPositiveDefiniteError(f"pivot {d:.3e} at column {j}")
        low[j, j] = math.sqrt(d)
        if j + 1 < n:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def cholesky_solve_factored(low: np.ndarray, b) -> np.ndarray:
    """Solve with an existing Cholesky factor; b is a vector or matrix."""
    b = np.asarray(b, dtype=np.float64)
    vector_rhs = b.ndim == 1
    x = b.reshape(low.shape[0], -1).copy()
    n = low.shape[0]
    for i in range(n):
        if i > 0:
            x[i] -= low[i, :i] @ x[:i]
        x[i] /= low[i, i]
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i] -= low[i + 1 :, i] @ x[i + 1 :]
        x[i] /= low[i, i]
    return x[:, 0] if vector_rhs else x


def cholesky_solve(a, b) -> np.ndarray:
    """Solve a @ x = b for SPD a via Cholesky; b is a vector or matrix."""
    return cholesky_solve_factored(cholesky_factor(a), b)


def power_iteration_norm(a) -> tuple[float, bool]:
    """Largest singular value by power iteration on a^T a.

    Starts from the normalized all-ones vector for reproducibility; if that
    start happens to be annihilated, reseeds once with a fixed pseudo-random
    vector.  Returns (value, converged): converged is False when the
    NORM_MAX_ITER cap was hit before the Rayleigh quotient settled to
    relative tolerance NORM_RTOL.
    """
    a = as_matrix(a)
    m = a.shape[1]
    x = np.full(m, 1.0 / math.sqrt(m))
    reseeded = False
    rayleigh = 0.0
    tiny = np.finfo(np.float64).tiny
    for it in range(NORM_MAX_ITER):
        ax = a @ x
        new_rayleigh = float(ax @ ax)  # = x^T (a^T a) x with ||x|| = 1
        z = a.T @ ax
        nz = float(np.linalg.norm(z))
        if nz <= tiny:
            if new_rayleigh <= tiny and not reseeded:
                # all-ones start sat in the null space; deterministic reseed
                x = np.random.default_rng(0).standard_normal(m)
                x /= np.linalg.norm(x)
                reseeded = True
                continue
            return math.sqrt(max(new_rayleigh, 0.0)), True
        if it > 0 and abs(new_rayleigh - rayleigh) <= NORM_RTOL * max(new_rayleigh, tiny):
            return math.sqrt(new_rayleigh), True
        rayleigh = new_rayleigh
        x = z / nz
    return math.sqrt(max(rayleigh, 0.0)), False


def operator_norm(a) -> float:
    """Spectral norm (largest singular value) of a matrix."""
    return power_iteration_norm(a)[0]
