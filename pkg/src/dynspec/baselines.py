"""Reference eigensolvers and timing helpers used for oracles and benchmarks."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .matrix_core import Matrix, as_dense, is_sparse


@dataclass
class EigenEstimate:
    eigenvalue: complex
    vector: np.ndarray
    residual: float
    iterations: int
    converged: bool


def _residual(m: Matrix, v: np.ndarray, ev: complex) -> float:
    r = m @ v - ev * v
    return float(np.max(np.abs(r)) / np.max(np.abs(v)))


def power_iteration(
    m: Matrix,
    shift: complex | None = None,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    v0: np.ndarray | None = None,
    inner: str = "lu",
) -> EigenEstimate:
    """Power iteration, or shift-invert power iteration when ``shift`` is given.

    With a shift the iteration runs on ``(M - shift I)^{-1}`` and converges to
    the eigenvalue closest to ``shift``. ``inner="lu"`` factorizes the shifted
    matrix once; ``inner="krylov"`` solves each step with Jacobi-preconditioned
    GMRES instead, which avoids LU fill-in on large diagonally dominant
    systems. The
    eigenvalue is the Rayleigh quotient of ``M`` at the final vector; the
    loop stops once ``|M v - ev v|_inf / |v|_inf <= tol * max(1, |ev|)``.
    """
    n = m.shape[0]
    v = np.ones(n, dtype=complex) if v0 is None else np.asarray(v0, dtype=complex).copy()
    v /= np.linalg.norm(v)
    if shift is None:
        apply = lambda x: m @ x  # noqa: E731
    else:
        shifted = sp.csc_matrix(m, dtype=complex) - shift * sp.identity(n, dtype=complex, format="csc")
        if inner == "lu":
            apply = spla.splu(shifted).solve
        elif inner == "krylov":
            apply = _jacobi_gmres(shifted.tocsr(), tol)
        else:
            raise ValueError(f"unknown inner solver {inner!r}")
    ev = np.vdot(v, m @ v)
    res = np.inf
    for k in range(1, max_iter + 1):
        w = apply(v)
        v = w / np.linalg.norm(w)
        mv = m @ v
        ev = np.vdot(v, mv)
        res = float(np.max(np.abs(mv - ev * v)) / np.max(np.abs(v)))
        if res <= tol * max(1.0, abs(ev)):
            return EigenEstimate(complex(ev), v, res, k, True)
    return EigenEstimate(complex(ev), v, res, max_iter, False)


def _jacobi_gmres(a: sp.csr_matrix, tol: float):
    diag = a.diagonal()
    if np.any(diag == 0):
        raise ValueError("Jacobi preconditioner needs a zero-free diagonal")
    precond = spla.LinearOperator(a.shape, matvec=lambda x: x / diag, dtype=complex)

    def solve(b):
        x, info = spla.gmres(a, b, x0=b / diag, rtol=min(tol, 1e-12), atol=0.0, M=precond, restart=50, maxiter=200)
        if info != 0:
            raise RuntimeError(f"GMRES inner solve failed (info={info})")
        return x

    return solve


def rayleigh_quotient_iteration(
    m: Matrix,
    v0: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> EigenEstimate:
    """Rayleigh-quotient iteration with a direct solve per step (small N)."""
    a = as_dense(m)
    n = a.shape[0]
    v = np.asarray(v0, dtype=complex)
    v = v / np.linalg.norm(v)
    ev = np.vdot(v, a @ v)
    for k in range(1, max_iter + 1):
        try:
            w = np.linalg.solve(a - ev * np.eye(n), v)
        except np.linalg.LinAlgError:
            # shift hit an eigenvalue exactly
            return EigenEstimate(complex(ev), v, _residual(a, v, ev), k, True)
        v = w / np.linalg.norm(w)
        ev = np.vdot(v, a @ v)
        res = _residual(a, v, ev)
        if res < tol:
            return EigenEstimate(complex(ev), v, res, k, True)
    return EigenEstimate(complex(ev), v, _residual(a, v, ev), max_iter, False)


def median_time(fn, reps: int = 3) -> float:
    """Median wall time of ``fn()`` over ``reps`` calls."""
    times = []
    for _ in range(max(1, reps)):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def matmul_time(m: Matrix, reps: int = 3) -> float:
    """MMT: median time of one ``M @ M`` product in the storage ``m`` already has."""
    if is_sparse(m):
        return median_time(lambda: m @ m, reps)
    a = np.asarray(m)
    return median_time(lambda: a @ a, reps)
