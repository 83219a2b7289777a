"""Dynamical perturbation theory: eigenvectors of ``M = D + lam * Delta`` as
fixed points of a quadratic map.

Row ``n`` of the iterate ``A`` is the candidate eigenvector ``z_n`` in the
chart ``z_n[n] = 1``. One step of the full map is

    F(A) = I + lam * theta * (A Delta^T - diag(A Delta^T) A)

with ``theta[n, m] = 1 / (d[n] - d[m])`` (zero diagonal) and ``*`` the
elementwise product. The single-row map ``F_n`` is row ``n`` of the same
formula and only needs one product ``Delta @ z``.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import json
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .matrix_core import Matrix, as_dense, max_abs, row_dot, times_transpose
from .partition import (
    DEGENERACY_TOL,
    DegenerateSpectrum,
    PartitionedProblem,
    build_theta,
    partition,
    theta_row,
)
from .polynomial import durand_kerner, faddeev_leverrier


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    BOUNDED = "BoundedNonConverged"
    DIVERGED = "Diverged"
    MAX_ITER = "MaxIterations"


class SingularBasis(np.linalg.LinAlgError):
    pass


@dataclass
class IterationOptions:
    tol: float = 1e-12
    residual_tol: float = 1e-10
    max_iter: int = 10_000
    divergence_threshold: float = 1e8
    cycle_window: int = 32

    def __post_init__(self):
        for name in ("tol", "residual_tol", "max_iter", "divergence_threshold", "cycle_window"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IterationOptions.{name} must be positive")

    def replace(self, **changes) -> "IterationOptions":
        return dataclasses.replace(self, **changes)


@dataclass
class ConvergenceReport:
    a: np.ndarray
    eigenvalues: np.ndarray
    status: Status
    iterations: int
    residuals: np.ndarray
    step_norm: float
    trace: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "iterations": int(self.iterations),
            "eigenvalues": [[float(e.real), float(e.imag)] for e in np.atleast_1d(self.eigenvalues)],
            "residuals": [float(r) for r in np.atleast_1d(self.residuals)],
            "step_norm": float(self.step_norm),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def write_trace(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "step_norm", "max_residual", "eigenvalue_change"])
            w.writerows(self.trace)


# --------------------------------------------------------------------------- maps


def _apply(a, x, rows, theta_rows, lam):
    # x = a @ delta.T; the diagonal term only touches off-chart entries since theta[n, n] = 0
    r = np.arange(a.shape[0])
    out = lam * theta_rows * (x - x[r, rows][:, None] * a)
    out[r, rows] += 1.0
    return out


def step_full(a: np.ndarray, theta: np.ndarray, delta: Matrix, lam: complex) -> np.ndarray:
    """One application of the full map ``F`` to the row-stacked iterate ``a``."""
    a = np.asarray(a, dtype=complex)
    if a.shape != theta.shape or a.shape[1] != delta.shape[0]:
        raise ValueError(f"shape mismatch: a {a.shape}, theta {theta.shape}, delta {delta.shape}")
    return _apply(a, times_transpose(a, delta), np.arange(a.shape[0]), theta, lam)


def step_single(z: np.ndarray, n: int, theta: np.ndarray, delta: Matrix, lam: complex) -> np.ndarray:
    """One application of ``F_n``. ``theta`` may be the full gap matrix or its row ``n``."""
    z = np.asarray(z, dtype=complex)
    row = theta[n] if np.ndim(theta) == 2 else theta
    dz = delta @ z
    out = lam * row * (dz - dz[n] * z)
    out[n] += 1.0
    return out


def eigenvalue_of(z: np.ndarray, n: int, d, delta: Matrix, lam: complex) -> complex:
    """``d[n] + lam * (Delta z)[n]`` for a chart-normalized ``z``."""
    return complex(np.asarray(d)[n] + lam * row_dot(delta, n, np.asarray(z, dtype=complex)))


def chart_residuals(a, rows, d, delta, lam, x=None) -> np.ndarray:
    """``|M z - eps z|_inf / |z|_inf`` per row, ``eps = d[n] + lam (Delta z)[n]``.

    Evaluated as ``(D - d[n]) z + lam (Delta z - (Delta z)[n] z)``, which is
    the same vector without the cancellation of ``d[n] - eps``.
    """
    a = np.atleast_2d(a)
    rows = np.atleast_1d(rows)
    if x is None:
        x = times_transpose(a, delta)
    r = np.arange(a.shape[0])
    res = a * (np.asarray(d)[None, :] - np.asarray(d)[rows][:, None])
    res += lam * (x - x[r, rows][:, None] * a)
    return np.max(np.abs(res), axis=1) / np.max(np.abs(a), axis=1)


# --------------------------------------------------------------------------- drivers


def _drive(
    a0: np.ndarray,
    rows: np.ndarray,
    p: PartitionedProblem,
    theta_rows: np.ndarray,
    opts: IterationOptions,
    schedule: Callable[[int], complex] | None = None,
    trace: bool = False,
) -> ConvergenceReport:
    lam = p.lam
    a = np.array(a0, dtype=complex)
    r = np.arange(a.shape[0])
    steps: deque = deque(maxlen=opts.cycle_window + 1)
    history: deque = deque(maxlen=opts.cycle_window)
    trace_rows: list = []
    status = None
    step = np.inf
    stalled = False
    prev_eps = None
    x = times_transpose(a, p.delta)
    k = 0
    while k < opts.max_iter:
        lam_k = lam if schedule is None else schedule(k)
        if trace:
            eps = p.d[rows] + lam * x[r, rows]
            change = np.inf if prev_eps is None else float(np.max(np.abs(eps - prev_eps)))
            prev_eps = eps
            res = chart_residuals(a, rows, p.d, p.delta, lam, x)
            trace_rows.append((k, float(step), float(np.max(res)), change))
        new = _apply(a, x, rows, theta_rows, lam_k)
        k += 1
        with np.errstate(invalid="ignore", over="ignore"):
            step = float(np.max(np.abs(new - a)))
        a = new
        size = max_abs(a)
        if not np.isfinite(size) or size > opts.divergence_threshold:
            status = Status.DIVERGED
            break
        x = times_transpose(a, p.delta)
        steps.append(step)
        ramp_done = schedule is None or abs(lam_k - lam) <= opts.tol * abs(lam)
        if step < opts.tol and ramp_done:
            res = chart_residuals(a, rows, p.d, p.delta, lam, x)
            if np.max(res) < opts.residual_tol:
                status = Status.CONVERGED
                break
            stalled = True
        if (
            ramp_done
            and k % opts.cycle_window == 0
            and len(history) == opts.cycle_window
            and step > np.sqrt(opts.tol)
        ):
            # revisits a recent state while still moving: a periodic orbit
            if any(max_abs(a - h) < opts.tol for h in list(history)[:-1]):
                status = Status.BOUNDED
                break
        history.append(a)
    if status is None:
        # short budgets compare over whatever window they have
        contracting = len(steps) >= 2 and steps[-1] < 0.5 * steps[0]
        status = Status.MAX_ITER if (stalled or contracting) else Status.BOUNDED

    with np.errstate(invalid="ignore", over="ignore"):
        eigenvalues = p.d[rows] + lam * x[r, rows]
        residuals = chart_residuals(a, rows, p.d, p.delta, lam, x)
    return ConvergenceReport(a, eigenvalues, status, k, residuals, step, trace_rows)


def iterate_full(
    p: PartitionedProblem,
    opts: IterationOptions | None = None,
    *,
    a0: np.ndarray | None = None,
    trace: bool = False,
    degeneracy_tol: float = DEGENERACY_TOL,
) -> ConvergenceReport:
    """Iterate ``F`` from the identity (or ``a0``) until the step norm falls
    below ``opts.tol`` and every row passes the residual check."""
    opts = opts or IterationOptions()
    theta = build_theta(p.d, degeneracy_tol)
    a = np.eye(p.n, dtype=complex) if a0 is None else a0
    return _drive(a, np.arange(p.n), p, theta, opts, trace=trace)


def iterate_single(
    p: PartitionedProblem,
    n: int,
    opts: IterationOptions | None = None,
    *,
    z0: np.ndarray | None = None,
    trace: bool = False,
    degeneracy_tol: float = DEGENERACY_TOL,
) -> ConvergenceReport:
    """Iterate ``F_n`` alone. The report's ``a`` is the vector ``z_n``."""
    opts = opts or IterationOptions()
    return _single(p, n, opts, z0, None, trace, degeneracy_tol)


def _single(p, n, opts, z0, schedule, trace, degeneracy_tol):
    _check_row_simple(p.d, n, degeneracy_tol)
    row = theta_row(p.d, n)
    z = np.zeros(p.n, dtype=complex)
    z[n] = 1.0
    if z0 is not None:
        z = np.asarray(z0, dtype=complex)
    rep = _drive(z[None, :], np.array([n]), p, row[None, :], opts, schedule, trace)
    rep.a = rep.a[0]
    return rep


def _check_row_simple(d, n, degeneracy_tol):
    # F_n only divides by the gaps d[n] - d[m]
    gaps = np.abs(d[n] - d)
    gaps[n] = np.inf
    spread = max(1.0, float(np.max(np.abs(d - d[n]))))
    m = int(np.argmin(gaps))
    if gaps[m] < degeneracy_tol * spread:
        raise DegenerateSpectrum(min(m, n), max(m, n), float(gaps[m]))


def iterate_ramped(
    p: PartitionedProblem,
    alpha: float,
    opts: IterationOptions | None = None,
    *,
    row: int | None = None,
    z0: np.ndarray | None = None,
    trace: bool = False,
) -> ConvergenceReport:
    """Nonautonomous iteration with ``lam_k = lam * (1 - alpha**k)``.

    Convergence is only tested once ``lam_k`` is within ``tol`` (relative) of
    ``lam``. ``row=None`` ramps the full map, otherwise the single-row map.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    opts = opts or IterationOptions()
    lam = p.lam

    def schedule(k: int) -> complex:
        return lam * (1.0 - alpha**k)

    if row is None:
        theta = build_theta(p.d)
        a = np.eye(p.n, dtype=complex) if z0 is None else z0
        return _drive(a, np.arange(p.n), p, theta, opts, schedule, trace)
    return _single(p, row, opts, z0, schedule, trace, DEGENERACY_TOL)


@dataclass
class DominantResult:
    vector: np.ndarray
    unit_vector: np.ndarray
    eigenvalue: complex
    residual: float
    iterations: int
    status: Status
    index: int

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def dominant_eigenpair(
    p: PartitionedProblem,
    opts: IterationOptions | None = None,
    degeneracy_tol: float = DEGENERACY_TOL,
) -> DominantResult:
    """Eigenpair continuing the largest unperturbed eigenvalue, via ``F_{n*}`` only.

    Costs one product ``Delta @ z`` plus O(N) work per iteration.
    """
    opts = opts or IterationOptions()
    re = p.d.real
    order = np.argsort(re)
    top = int(order[-1])
    if p.n > 1:
        spread = max(1.0, float(re[top] - re[order[0]]))
        if re[top] - re[order[-2]] < degeneracy_tol * spread:
            raise DegenerateSpectrum(int(order[-2]), top, float(re[top] - re[order[-2]]))
    row = theta_row(p.d, top)
    rep = _drive(
        np.eye(1, p.n, top, dtype=complex), np.array([top]), p, row[None, :], opts
    )
    z = rep.a[0]
    return DominantResult(
        vector=z,
        unit_vector=z / np.linalg.norm(z),
        eigenvalue=complex(rep.eigenvalues[0]),
        residual=float(rep.residuals[0]),
        iterations=rep.iterations,
        status=rep.status,
        index=top,
    )


# --------------------------------------------------------------------------- stability


def jacobian_single(z: np.ndarray, n: int, theta: np.ndarray, delta: Matrix, lam: complex) -> np.ndarray:
    """Analytic Jacobian ``J[m, k] = dF_n^m / dz^k`` (row ``n`` is zero)."""
    z = np.asarray(z, dtype=complex)
    delta = as_dense(delta)
    row = theta[n] if np.ndim(theta) == 2 else theta
    dz = delta @ z
    inner = delta - dz[n] * np.eye(z.size) - np.outer(z, delta[n])
    return lam * row[:, None] * inner


def multipliers(j: np.ndarray, active_dims: Sequence[int] | None = None, tol: float = 1e-12) -> np.ndarray:
    """Eigenvalues of the Jacobian restricted to ``active_dims`` (chart coordinates).

    Characteristic polynomial by Faddeev-LeVerrier, roots by Durand-Kerner.
    Limited to 8 dimensions.
    """
    j = np.asarray(j, dtype=complex)
    if active_dims is not None:
        idx = np.asarray(active_dims)
        j = j[np.ix_(idx, idx)]
    if j.shape[0] > 8:
        raise ValueError(f"multipliers supports at most 8 dimensions, got {j.shape[0]}")
    if j.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    return durand_kerner(faddeev_leverrier(j), tol=tol)


def chart_multipliers(z: np.ndarray, n: int, p: PartitionedProblem) -> np.ndarray:
    """Multipliers of ``F_n`` at ``z`` with the fixed chart coordinate removed."""
    jac = jacobian_single(z, n, theta_row(p.d, n), p.delta, p.lam)
    keep = [m for m in range(p.n) if m != n]
    return multipliers(jac, keep)


# --------------------------------------------------------------------------- continuation


def homotopy_solve(
    p: PartitionedProblem, q: int, opts: IterationOptions | None = None
) -> ConvergenceReport:
    """Reach ``lam`` in ``q`` equal increments, re-diagonalizing between stages.

    Stage 1 solves ``(D, Delta, lam/q)``. After stage ``s`` the accumulated
    eigenvector basis ``V`` (columns) gives ``V^{-1} M(s+1) V``, which is
    Epstein-Nesbet split and solved again with the perturbation folded in.
    The report's residuals are measured against the original ``M``.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    opts = opts or IterationOptions()
    n = p.n
    rep = iterate_full(p.with_lambda(p.lam / q), opts)
    total = rep.iterations
    stages = [{"stage": 1, "status": rep.status.value, "iterations": rep.iterations}]
    if not rep.converged:
        rep.info = {"stages": stages, "failed_stage": 1}
        return rep
    if q == 1:
        rep.info = {"stages": stages}
        return rep
    basis = _checked_basis(rep.a)
    delta = as_dense(p.delta)
    d = np.diag(p.d)
    for s in range(2, q + 1):
        m_s = d + (p.lam * s / q) * delta
        rebased = np.linalg.solve(basis, m_s @ basis)
        sub = partition(rebased)
        rep = iterate_full(sub, opts)
        total += rep.iterations
        stages.append({"stage": s, "status": rep.status.value, "iterations": rep.iterations})
        if not rep.converged:
            rep.iterations = total
            rep.info = {"stages": stages, "failed_stage": s}
            return rep
        basis = basis @ _checked_basis(rep.a)

    vecs = basis.T.copy()
    for i in range(n):
        pivot = vecs[i, i]
        vecs[i] /= pivot if abs(pivot) > 1e-300 else np.linalg.norm(vecs[i])
    eigenvalues = rep.eigenvalues
    m = p.matrix()
    res = np.abs(vecs @ as_dense(m).T - eigenvalues[:, None] * vecs).max(axis=1)
    residuals = res / np.abs(vecs).max(axis=1)
    status = Status.CONVERGED if np.max(residuals) < opts.residual_tol else Status.MAX_ITER
    return ConvergenceReport(
        vecs, eigenvalues, status, total, residuals, rep.step_norm, info={"stages": stages}
    )


def _checked_basis(a: np.ndarray) -> np.ndarray:
    v = np.asarray(a).T
    if not np.isfinite(np.linalg.cond(v)) or np.linalg.cond(v) > 1e14:
        raise SingularBasis("eigenvector basis is numerically singular")
    return v
