"""Dense linear-algebra primitives for matrix-valued time series models.

All vectorization in this package is column-major: ``vec`` stacks columns,
``vech`` stacks the on-and-below-diagonal entries column by column, and the
commutation/expansion matrices follow the same convention.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import NotPositiveDefiniteError

SYMMETRY_RTOL = 1e-10


def vec(matrix) -> np.ndarray:
    """Stack the columns of ``matrix`` into a 1-d vector."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {matrix.shape}")
    return matrix.reshape(-1, order="F").copy()


def mat(vector, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`: reshape a vector into ``rows x cols``, column-major."""
    vector = np.asarray(vector, dtype=float).ravel()
    if vector.size != rows * cols:
        raise ValueError(f"vector of length {vector.size} cannot fill a {rows}x{cols} matrix")
    return vector.reshape((rows, cols), order="F").copy()


def _vech_indices(n: int):
    # Upper-triangle pairs in row-major order mirror the lower triangle in
    # column-major order, which is the stacking vech uses.
    r, c = np.triu_indices(n)
    return c, r


def vech(matrix) -> np.ndarray:
    """Half-vectorize a symmetric matrix (lower triangle, column-major)."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"vech requires a square matrix, got shape {matrix.shape}")
    check_symmetric(matrix)
    r, c = _vech_indices(matrix.shape[0])
    return matrix[r, c].copy()


def unvech(vector) -> np.ndarray:
    """Rebuild the symmetric matrix whose half-vectorization is ``vector``."""
    vector = np.asarray(vector, dtype=float).ravel()
    n = int(round((np.sqrt(8 * vector.size + 1) - 1) / 2))
    if n * (n + 1) // 2 != vector.size:
        raise ValueError(f"length {vector.size} is not a triangular number")
    out = np.zeros((n, n))
    r, c = _vech_indices(n)
    out[r, c] = vector
    out[c, r] = vector
    return out


def kron(a, b) -> np.ndarray:
    """Kronecker product (delegates to numpy)."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


@lru_cache(maxsize=64)
def commutation_matrix(m: int, n: int) -> np.ndarray:
    """Permutation ``K`` with ``K @ vec(M) = vec(M.T)`` for every m x n ``M``.

    Cached and returned read-only.
    """
    if m < 1 or n < 1:
        raise ValueError("dimensions must be positive")
    out = np.zeros((m * n, m * n))
    i, j = np.divmod(np.arange(m * n), n)  # row index of vec(M.T) is j + i*n
    out[np.arange(m * n), j * m + i] = 1.0
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def expansion_matrix(m: int) -> np.ndarray:
    """Matrix ``G`` with ``vec(P) = G @ vech(P)`` for every symmetric m x m ``P``.

    Also known in the literature as the duplication matrix. Cached and
    returned read-only.
    """
    if m < 1:
        raise ValueError("dimension must be positive")
    h = m * (m + 1) // 2
    pos = np.zeros((m, m), dtype=int)
    r, c = _vech_indices(m)
    pos[r, c] = np.arange(h)
    pos[c, r] = pos[r, c]
    out = np.zeros((m * m, h))
    cols = np.arange(m * m)
    i, j = cols % m, cols // m  # vec index (i, j) at position i + j*m
    out[cols, pos[i, j]] = 1.0
    out.setflags(write=False)
    return out


def spectral_radius(matrix) -> float:
    """Largest eigenvalue modulus of a square (possibly nonsymmetric) matrix."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"spectral radius requires a square matrix, got {matrix.shape}")
    if matrix.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def check_symmetric(matrix, rtol: float = SYMMETRY_RTOL) -> None:
    """Raise if ``matrix`` deviates from symmetry by more than ``rtol`` (relative)."""
    matrix = np.asarray(matrix, dtype=float)
    scale = max(1.0, float(np.max(np.abs(matrix))))
    if np.max(np.abs(matrix - matrix.T)) > rtol * scale:
        raise ValueError("matrix is not symmetric within tolerance")


def cholesky_spd(matrix, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor; raises :class:`NotPositiveDefiniteError` on failure."""
    matrix = np.asarray(matrix, dtype=float)
    check_symmetric(matrix)
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc


def inv_spd(matrix, name: str = "matrix") -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factor."""
    low = cholesky_spd(matrix, name=name)
    ident = np.eye(low.shape[0])
    low_inv = solve_triangular(low, ident, lower=True)
    out = low_inv.T @ low_inv
    return 0.5 * (out + out.T)


def logdet_spd(matrix, name: str = "matrix") -> float:
    """log det of an SPD matrix computed from Cholesky diagonals."""
    low = cholesky_spd(matrix, name=name)
    return 2.0 * float(np.sum(np.log(np.diag(low))))


def matrix_normal_logpdf(y, mean, row_cov, col_cov) -> float:
    """Log-density of the matrix normal distribution.

    ``y`` and ``mean`` are m x n; ``row_cov`` (m x m) and ``col_cov`` (n x n) are
    the SPD scale matrices, so that ``vec(y)`` has covariance
    ``kron(col_cov, row_cov)``. Determinants and the quadratic form are computed
    through Cholesky factors; the mn x mn covariance is never formed.
    """
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if y.shape != mean.shape:
        raise ValueError(f"shape mismatch: observation {y.shape} vs mean {mean.shape}")
    m, n = y.shape
    low_u = cholesky_spd(row_cov, name="row_cov")
    low_v = cholesky_spd(col_cov, name="col_cov")
    resid = y - mean
    half = solve_triangular(low_u, resid, lower=True)
    white = solve_triangular(low_v, half.T, lower=True)
    quad = float(np.sum(white * white))
    logdet_u = 2.0 * float(np.sum(np.log(np.diag(low_u))))
    logdet_v = 2.0 * float(np.sum(np.log(np.diag(low_v))))
    return -0.5 * (m * n * np.log(2.0 * np.pi) + n * logdet_u + m * logdet_v + quad)
