"""Rayleigh-Schrodinger series as the baseline for the dynamical scheme.

Coefficients follow the linear recursion

    a(0) = I
    a(l) = theta * (a(l-1) Delta^T - sum_{s<l} diag(a(s) Delta^T) a(l-1-s))

with eigenvalue corrections ``eps(l) = diag(a(l-1) Delta^T)``. Order ``l``
needs ``l`` triangle products, so ``k`` orders cost O(k^2 N^2) on top of
``k`` products with ``Delta`` and O(k N^2) memory, against O(N^2) for the
dynamical map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .dpt import IterationOptions, chart_residuals, iterate_full, step_full
from .matrix_core import times_transpose
from .partition import PartitionedProblem, build_theta

RS_GROWTH_FACTOR = 1e3
RS_GROWTH_ORDERS = 5
RS_MAX_ORDER = 500


@dataclass
class RSExpansion:
    coefficients: np.ndarray  # (k+1, N, N); coefficients[l] = a(l)
    eigencorrections: np.ndarray  # (k+1, N); row 0 holds the unperturbed d

    @property
    def order(self) -> int:
        return self.coefficients.shape[0] - 1


def rs_orders(p: PartitionedProblem, theta: np.ndarray | None = None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(a(l), eps(l))`` for ``l = 0, 1, 2, ...`` (``lam`` is ignored)."""
    if theta is None:
        theta = build_theta(p.d)
    n = p.n
    cap = 16
    coeffs = np.empty((cap, n, n), dtype=complex)
    diags = np.empty((cap, n), dtype=complex)
    a = np.eye(n, dtype=complex)
    rows = np.arange(n)
    level = 0
    yield a, p.d.copy()
    while True:
        if level + 1 >= cap:
            cap *= 2
            coeffs = np.resize(coeffs, (cap, n, n))
            diags = np.resize(diags, (cap, n))
        coeffs[level] = a
        prod = times_transpose(a, p.delta)
        diags[level] = prod[rows, rows]
        level += 1
        # sum_{s=0}^{l-1} diag(a(s) Delta^T) a(l-1-s)
        conv = np.einsum("sn,snm->nm", diags[:level], coeffs[level - 1 :: -1])
        a = theta * (prod - conv)
        yield a, diags[level - 1].copy()


def rs_coefficients(p: PartitionedProblem, k: int) -> RSExpansion:
    """Coefficients ``a(0..k)`` and eigenvalue corrections ``eps(0..k)``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    coeffs, eps = [], []
    for level, (a, e) in enumerate(rs_orders(p)):
        coeffs.append(a)
        eps.append(e)
        if level == k:
            break
    return RSExpansion(np.array(coeffs), np.array(eps))


def rs_partial_sum(e: RSExpansion, lam: complex) -> tuple[np.ndarray, np.ndarray]:
    """``sum_l a(l) lam^l`` and ``sum_l eps(l) lam^l`` by Horner's rule."""
    acc = np.zeros_like(e.coefficients[0])
    eps = np.zeros_like(e.eigencorrections[0])
    for level in range(e.order, -1, -1):
        acc = acc * lam + e.coefficients[level]
        eps = eps * lam + e.eigencorrections[level]
    return acc, eps


def dpt_iterates(p: PartitionedProblem, k: int, lam: complex | None = None) -> np.ndarray:
    """``F^k(I)``: the dynamical approximation after ``k`` steps."""
    lam = p.lam if lam is None else lam
    theta = build_theta(p.d)
    a = np.eye(p.n, dtype=complex)
    for _ in range(k):
        a = step_full(a, theta, p.delta, lam)
    return a


def truncation_agreement(p: PartitionedProblem, k: int, lam: complex | None = None) -> float:
    """``max |F^k(I) - sum_{l<=k} a(l) lam^l|``; of order ``lam^(k+1)``."""
    lam = p.lam if lam is None else lam
    rs, _ = rs_partial_sum(rs_coefficients(p, k), lam)
    return float(np.max(np.abs(dpt_iterates(p, k, lam) - rs)))


def second_order_gap(p: PartitionedProblem, lam: complex | None = None) -> np.ndarray:
    """Closed form of ``F^2(I) - A_RS(2)`` for zero-diagonal ``Delta``:
    ``-lam^3 theta * ((B Delta^T) |> B)`` with ``B = theta * Delta^T``."""
    lam = p.lam if lam is None else lam
    theta = build_theta(p.d)
    b = theta * times_transpose(np.eye(p.n, dtype=complex), p.delta)
    bd = times_transpose(b, p.delta)
    return -(lam**3) * theta * (np.diag(bd)[:, None] * b)


@dataclass
class RSRun:
    order: int
    converged: bool
    diverged: bool
    a: np.ndarray
    eigenvalues: np.ndarray
    step_norms: list


def rs_iterate(
    p: PartitionedProblem,
    tol: float = 1e-12,
    residual_tol: float = 1e-10,
    max_order: int = RS_MAX_ORDER,
) -> RSRun:
    """Sum the series order by order until the increment ``|a(k) lam^k|_max``
    drops below ``tol`` with verified residuals.

    Divergence: the increment stays above ``1e3`` times its running minimum
    for 5 consecutive orders (zero increments, e.g. from parity, are skipped),
    or becomes non-finite.
    """
    lam = p.lam
    rows = np.arange(p.n)
    acc = None
    eps = None
    power = 1.0 + 0j
    running_min = np.inf
    above = 0
    steps: list = []
    for level, (a, e) in enumerate(rs_orders(p)):
        if acc is None:
            acc, eps = a.copy(), e.copy()
            if level == max_order:
                break
            continue
        power = power * lam
        inc = a * power
        acc = acc + inc
        eps = eps + e * power
        with np.errstate(invalid="ignore", over="ignore"):
            step = float(np.max(np.abs(inc)))
        steps.append(step)
        if not np.isfinite(step):
            return RSRun(level, False, True, acc, eps, steps)
        if step < tol:
            res = chart_residuals(acc, rows, p.d, p.delta, lam)
            if np.max(res) < residual_tol:
                return RSRun(level, True, False, acc, eps, steps)
        if step > 0.0:
            running_min = min(running_min, step)
            above = above + 1 if step > RS_GROWTH_FACTOR * running_min else 0
            if above >= RS_GROWTH_ORDERS:
                return RSRun(level, False, True, acc, eps, steps)
        if level >= max_order:
            break
    return RSRun(max_order, False, False, acc, eps, steps)


@dataclass
class OrderComparison:
    k_d: int
    k_rs: int
    d_converged: bool
    rs_converged: bool


def compare_orders(
    p: PartitionedProblem,
    lam: complex | None = None,
    tol: float = 1e-12,
    max_order: int = RS_MAX_ORDER,
    opts: IterationOptions | None = None,
) -> OrderComparison:
    """Orders needed by each scheme to reach step norm ``tol`` (residuals verified)."""
    if lam is not None:
        p = p.with_lambda(lam)
    opts = (opts or IterationOptions()).replace(tol=tol)
    d_rep = iterate_full(p, opts)
    rs = rs_iterate(p, tol, opts.residual_tol, max_order)
    return OrderComparison(d_rep.iterations, rs.order, d_rep.converged, rs.converged)
