"""Matrix storage helpers and the product kernels used by the perturbation maps.

Dense matrices are complex128 ``numpy`` arrays, sparse ones are
``scipy.sparse.csr_matrix`` with complex values and diagonals are 1-D
arrays. Every kernel is pure: inputs are never modified.
"""

from __future__ import annotations

import os
from typing import Union

import numpy as np
import scipy.io
import scipy.sparse as sp

Matrix = Union[np.ndarray, sp.spmatrix, sp.sparray]


class ShapeError(ValueError):
    pass


class MatrixMarketError(ValueError):
    pass


class NormNotConverged(RuntimeError):
    """Power iteration for the spectral norm ran out of iterations."""

    def __init__(self, estimate: float, iterations: int):
        super().__init__(
            f"spectral norm did not converge after {iterations} iterations "
            f"(best estimate {estimate!r})"
        )
        self.estimate = estimate
        self.iterations = iterations


def is_sparse(a) -> bool:
    return sp.issparse(a)


def as_dense(a) -> np.ndarray:
    """Complex dense copy-free view when possible."""
    if sp.issparse(a):
        return np.asarray(a.toarray(), dtype=complex)
    return np.asarray(a, dtype=complex)


def as_sparse(a) -> sp.csr_matrix:
    """Compressed-row complex matrix; column indices sorted, duplicates summed."""
    m = sp.csr_matrix(a, dtype=complex)
    m.sum_duplicates()
    m.sort_indices()
    return m


def as_matrix(a) -> Matrix:
    """Promote to complex storage, keeping the sparse/dense kind."""
    return as_sparse(a) if sp.issparse(a) else np.asarray(a, dtype=complex)


def as_diagonal(d) -> np.ndarray:
    d = np.asarray(d, dtype=complex)
    if d.ndim != 1:
        raise ShapeError(f"diagonal must be 1-D, got shape {d.shape}")
    return d


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise product. A sparse operand keeps its sparsity pattern."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    if sp.issparse(a):
        return as_sparse(a.multiply(b))
    if sp.issparse(b):
        return as_sparse(b.multiply(a))
    return np.asarray(a, dtype=complex) * np.asarray(b, dtype=complex)


def triangle(a: Matrix, b: Matrix) -> Matrix:
    """``(I * a) @ b``: row m of ``b`` scaled by ``a[m, m]``."""
    a, b = as_matrix(a), as_matrix(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"triangle: left operand must be square, got {a.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"triangle: shapes {a.shape} and {b.shape} not conformable")
    diag = np.asarray(a.diagonal(), dtype=complex)
    if sp.issparse(b):
        return as_sparse(sp.diags(diag) @ b)
    return diag[:, None] * np.asarray(b, dtype=complex)


def times_transpose(a: np.ndarray, delta: Matrix) -> np.ndarray:
    """``a @ delta.T`` for dense ``a``; row n of the result is ``delta @ a[n]``."""
    if sp.issparse(delta):
        return np.asarray((delta @ a.T).T)
    return a @ np.asarray(delta).T


def row_dot(delta: Matrix, n: int, z: np.ndarray) -> complex:
    """``(delta @ z)[n]`` without forming the full product."""
    if sp.issparse(delta):
        lo, hi = delta.indptr[n], delta.indptr[n + 1]
        return complex(np.dot(delta.data[lo:hi], z[delta.indices[lo:hi]]))
    return complex(np.asarray(delta)[n] @ z)


def max_abs(a) -> float:
    if sp.issparse(a):
        return float(abs(a).max()) if a.nnz else 0.0
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def spectral_norm(a: Matrix, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on ``a^H a``.

    Starts from the normalized all-ones vector so results are reproducible.
    Stops when the estimate changes by less than ``tol`` relative.
    """
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise ShapeError("spectral_norm of an empty matrix")
    a = as_matrix(a)
    ah = a.conj().T
    x = np.ones(a.shape[1], dtype=complex) / np.sqrt(a.shape[1])
    if max_abs(a) == 0.0:
        return 0.0
    if not np.any(a @ x):
        # all-ones lies in the null space; fall back to a fixed generic vector
        x = np.exp(1j * np.arange(a.shape[1]) * 0.7548776662466927)
        x /= np.linalg.norm(x)
    estimate = 0.0
    for it in range(1, max_iter + 1):
        y = ah @ (a @ x)
        ny = np.linalg.norm(y)
        new = float(np.sqrt(ny))
        if ny == 0.0:  # entries so small that a^H a x underflows
            return new
        x = y / ny
        if abs(new - estimate) <= tol * new:
            return new
        estimate = new
    raise NormNotConverged(estimate, max_iter)


def read_matrix_market(path: str | os.PathLike) -> Matrix:
    """Read a Matrix Market file. Coordinate files come back sparse, array files dense.

    Symmetric/hermitian/skew storage is expanded to full storage.
    """
    try:
        m = scipy.io.mmread(os.fspath(path))
    except (ValueError, IndexError, OverflowError) as exc:
        raise MatrixMarketError(f"{path}: {exc}") from exc
    if sp.issparse(m):
        return as_sparse(m)
    return np.asarray(m, dtype=complex)


def write_matrix_market(a: Matrix, path: str | os.PathLike, comment: str = "") -> None:
    """Write ``a`` as ``coordinate`` (sparse input) or ``array`` (dense input).

    Purely real data is written with the ``real`` field.
    """
    if sp.issparse(a):
        out = sp.coo_matrix(a)
        if out.dtype.kind == "c" and not np.any(out.data.imag):
            out = out.real
    else:
        out = np.asarray(a)
        if out.ndim == 1:
            out = out[:, None]
        if out.dtype.kind == "c" and not np.any(out.imag):
            out = out.real
    scipy.io.mmwrite(os.fspath(path), out, comment=comment)
