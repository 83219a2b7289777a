"""Characteristic polynomials and simultaneous polynomial root finding.

Used for Jacobian multipliers of small fixed-point maps and as an
eigenvalue oracle that shares no code with the iterative solvers.
"""

from __future__ import annotations

import numpy as np


class RootFinderError(RuntimeError):
    def __init__(self, message: str, roots: np.ndarray):
        super().__init__(message)
        self.roots = roots


def faddeev_leverrier(a) -> np.ndarray:
    """Coefficients of ``det(x I - a)``, highest degree first (monic).

    Plain Faddeev-LeVerrier recursion: ``M_k = a M_{k-1} + c_{n-k+1} I``,
    ``c_{n-k} = -tr(a M_k) / k``. Fine for the small matrices it is used on;
    it loses accuracy quickly beyond n of about 10.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"square matrix required, got {a.shape}")
    coeffs = np.zeros(n + 1, dtype=complex)
    coeffs[0] = 1.0
    m = np.zeros_like(a)
    eye = np.eye(n, dtype=complex)
    for k in range(1, n + 1):
        m = a @ m + coeffs[k - 1] * eye
        coeffs[k] = -np.trace(a @ m) / k
    return coeffs


def polyval(coeffs, x):
    """Horner evaluation, highest degree first."""
    acc = np.zeros_like(np.asarray(x, dtype=complex))
    for c in coeffs:
        acc = acc * x + c
    return acc


def durand_kerner(coeffs, tol: float = 1e-12, max_iter: int = 2000) -> np.ndarray:
    """All complex roots of a polynomial (highest degree first).

    Weierstrass/Durand-Kerner simultaneous iteration. Exact zero roots are
    split off first. A root is accepted when its update is below
    ``tol * max(1, |root|)`` or when the polynomial value is at rounding level,
    which keeps clustered roots from stalling the loop.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "f")
    if c.size == 0:
        raise ValueError("zero polynomial has no well-defined roots")
    trailing = c.size - np.trim_zeros(c, "b").size
    c = np.trim_zeros(c, "b")
    zeros = np.zeros(trailing, dtype=complex)
    degree = c.size - 1
    if degree == 0:
        return zeros
    c = c / c[0]
    if degree == 1:
        return np.concatenate([zeros, [-c[1]]])

    radius = 1.0 + np.max(np.abs(c[1:]))
    z = radius * (0.4 + 0.9j) ** np.arange(degree) / abs(0.4 + 0.9j) ** np.arange(degree)
    abs_c = np.abs(c)
    for _ in range(max_iter):
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        value = polyval(c, z)
        step = value / np.prod(diff, axis=1)
        z = z - step
        scale = np.maximum(1.0, np.abs(z))
        bound = 64 * np.finfo(float).eps * polyval(abs_c, np.abs(z)).real
        if np.all((np.abs(step) <= tol * scale) | (np.abs(polyval(c, z)) <= bound)):
            return np.concatenate([zeros, z])
    raise RootFinderError(
        f"Durand-Kerner did not converge in {max_iter} iterations", np.concatenate([zeros, z])
    )


def eigenvalues_via_charpoly(a, tol: float = 1e-12) -> np.ndarray:
    """Eigenvalues as roots of the characteristic polynomial."""
    return durand_kerner(faddeev_leverrier(a), tol=tol)


def match_multisets(x, y) -> float:
    """Largest distance in the best one-to-one pairing of two equal-size sets."""
    from scipy.optimize import linear_sum_assignment

    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if x.shape != y.shape:
        raise ValueError("multisets of different size")
    if x.size == 0:
        return 0.0
    cost = np.abs(x[:, None] - y[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())
