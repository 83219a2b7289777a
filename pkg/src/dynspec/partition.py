"""Perturbative partitionings ``M = D + lam * Delta`` and the benchmark families.

Randomness: every builder draws from numpy's PCG64 generator seeded with a
``SeedSequence`` keyed by ``(seed, crc32(purpose_tag))``. Two builders called
with the same seed therefore use independent, reproducible streams.
"""

from __future__ import annotations

import dataclasses
import json
import zlib
from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.sparse as sp

from .matrix_core import Matrix, as_diagonal, as_matrix, as_sparse, is_sparse

DEGENERACY_TOL = 1e-12


class DegenerateSpectrum(ValueError):
    """Two unperturbed eigenvalues coincide (within tolerance)."""

    def __init__(self, i: int, j: int, gap: float):
        super().__init__(
            f"unperturbed eigenvalues {i} and {j} collide (gap {gap:.3g}); "
            "the perturbation maps need a simple spectrum"
        )
        self.pair = (i, j)
        self.gap = gap


def rng_for(seed: int, tag: str) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode())])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class PartitionedProblem:
    """``M = diag(d) + lam * delta``; ``delta`` is dense or CSR."""

    d: np.ndarray
    delta: Matrix
    lam: complex = 1.0
    meta: dict = dataclasses.field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = as_diagonal(self.d)
        delta = as_matrix(self.delta)
        if delta.shape != (d.size, d.size):
            raise ValueError(f"delta shape {delta.shape} does not match diagonal size {d.size}")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "lam", complex(self.lam))

    @property
    def n(self) -> int:
        return self.d.size

    @property
    def sparse(self) -> bool:
        return is_sparse(self.delta)

    def with_lambda(self, lam: complex) -> "PartitionedProblem":
        return dataclasses.replace(self, lam=complex(lam))

    def matrix(self) -> Matrix:
        """The full ``M``; sparse if ``delta`` is."""
        if self.sparse:
            return as_sparse(sp.diags(self.d) + self.lam * self.delta)
        return np.diag(self.d) + self.lam * self.delta

    def matvec(self, z: np.ndarray) -> np.ndarray:
        return self.d * z + self.lam * (self.delta @ z)


def partition(m: Matrix, mode: str = "diagonal") -> PartitionedProblem:
    """Epstein-Nesbet split: ``D = diag(m)``, ``Delta = m - D``, ``lam = 1``."""
    if mode != "diagonal":
        raise ValueError(f"unknown partition mode {mode!r}")
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"square matrix required, got {m.shape}")
    d = np.asarray(m.diagonal(), dtype=complex)
    if is_sparse(m):
        delta = as_sparse(m) - sp.diags(d)
        delta = as_sparse(delta)
        delta.eliminate_zeros()
    else:
        delta = np.array(m, dtype=complex)
        np.fill_diagonal(delta, 0.0)
    return PartitionedProblem(d, delta, 1.0)


def epstein_nesbet(p: PartitionedProblem) -> PartitionedProblem:
    """Move ``lam * diag(Delta)`` into ``D`` keeping ``lam`` explicit."""
    diag = np.asarray(p.delta.diagonal(), dtype=complex)
    if not np.any(diag):
        return p
    d = p.d + p.lam * diag
    if p.sparse:
        delta = as_sparse(p.delta - sp.diags(diag))
        delta.eliminate_zeros()
    else:
        delta = np.array(p.delta)
        np.fill_diagonal(delta, 0.0)
    return PartitionedProblem(d, delta, p.lam, dict(p.meta, partition="epstein-nesbet"))


def check_simple(d, degeneracy_tol: float = DEGENERACY_TOL) -> None:
    """Raise DegenerateSpectrum when two entries of ``d`` are closer than
    ``degeneracy_tol * max(1, spread of d)``."""
    d = np.asarray(d, dtype=complex)
    if d.size < 2:
        return
    spread = max(1.0, float(np.max(np.abs(d - d[0]))))
    order = np.lexsort((d.imag, d.real))
    # sorted-neighbour check catches real spectra; full check for small complex ones
    if not np.any(d.imag) or d.size > 2000:
        gaps = np.abs(np.diff(d[order]))
        k = int(np.argmin(gaps))
        if gaps[k] < degeneracy_tol * spread:
            raise DegenerateSpectrum(int(order[k]), int(order[k + 1]), float(gaps[k]))
        return
    g = np.abs(d[:, None] - d[None, :])
    np.fill_diagonal(g, np.inf)
    i, j = np.unravel_index(np.argmin(g), g.shape)
    if g[i, j] < degeneracy_tol * spread:
        raise DegenerateSpectrum(int(min(i, j)), int(max(i, j)), float(g[i, j]))


def build_theta(d, degeneracy_tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Gap matrix ``theta[n, m] = 1 / (d[n] - d[m])`` with a zero diagonal."""
    d = as_diagonal(d)
    check_simple(d, degeneracy_tol)
    gaps = d[:, None] - d[None, :]
    np.fill_diagonal(gaps, 1.0)
    theta = 1.0 / gaps
    np.fill_diagonal(theta, 0.0)
    return theta


def theta_row(d, n: int) -> np.ndarray:
    """Row ``n`` of the gap matrix, in O(N) memory."""
    d = as_diagonal(d)
    gaps = d[n] - d
    gaps[n] = 1.0
    row = 1.0 / gaps
    row[n] = 0.0
    return row


def hermite_at_zero(count: int) -> np.ndarray:
    """``phi_{2n}(0)`` for ``n = 0..count-1`` (normalized Hermite functions).

    Ratio recurrence ``phi_{2n}(0) = -phi_{2n-2}(0) * sqrt((2n-1)/(2n))``
    avoids the factorials that overflow past n of about 85.
    """
    v = np.empty(count)
    v[0] = np.pi ** -0.25
    for n in range(1, count):
        v[n] = -v[n - 1] * np.sqrt((2 * n - 1) / (2 * n))
    return v


def build_oscillator(n_basis: int, lam: complex = 1.0) -> PartitionedProblem:
    """Even sector of the harmonic oscillator with a delta potential at the origin.

    ``D = diag(2n + 1/2)``, ``Delta = v v^T`` with ``v_n = phi_{2n}(0)``.
    """
    if n_basis < 1:
        raise ValueError("n_basis must be >= 1")
    v = hermite_at_zero(n_basis)
    d = 2.0 * np.arange(n_basis) + 0.5
    return PartitionedProblem(d, np.outer(v, v), lam, {"kind": "oscillator", "n": n_basis})


def build_random_uniform(n: int, seed: int, lam: complex = 1.0, scale: float = 1.0) -> PartitionedProblem:
    """``D = diag(1..n)``, ``Delta`` i.i.d. uniform on ``[-scale, scale]`` (nonsymmetric)."""
    rng = rng_for(seed, "random-uniform")
    delta = rng.uniform(-scale, scale, size=(n, n))
    d = np.arange(1, n + 1, dtype=float)
    return PartitionedProblem(d, delta, lam, {"kind": "random", "n": n, "seed": seed, "scale": scale})


def _pair_from_index(t: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Decode row-major strict-upper-triangle indices into pairs ``i < j``."""
    t = np.asarray(t, dtype=np.int64)
    rows = np.arange(n - 1, dtype=np.int64)
    starts = rows * n - rows * (rows + 1) // 2
    i = np.searchsorted(starts, t, side="right") - 1
    j = t - starts[i] + i + 1
    return i, j


def build_er_laplacian(n: int, seed: int) -> sp.csr_matrix:
    """Laplacian of a critical Erdos-Renyi graph: ``n`` vertices, exactly ``n`` edges.

    Edges are drawn uniformly without replacement among the ``n(n-1)/2`` pairs.
    """
    if n < 3:
        raise ValueError("need n >= 3 to place n distinct edges")
    rng = rng_for(seed, "er-laplacian")
    total = n * (n - 1) // 2
    picks = np.sort(rng.choice(total, size=n, replace=False))
    i, j = _pair_from_index(picks, n)
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([-np.ones(2 * n), np.ones(2 * n)])
    lap = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    lap.sum_duplicates()
    lap.sort_indices()
    return lap


def build_oscillator_er(n: int, seed: int, lam: complex = 0.01) -> PartitionedProblem:
    """Oscillator diagonal ``2k + 1/2`` perturbed by ``lam`` times an ER Laplacian,
    Epstein-Nesbet partitioned (zero-diagonal ``Delta``)."""
    d = 2.0 * np.arange(n) + 0.5
    lap = as_sparse(build_er_laplacian(n, seed))
    p = PartitionedProblem(d, lap, lam, {"kind": "er", "n": n, "seed": seed})
    return epstein_nesbet(p)


def build_oscillator_uniform(n: int, seed: int, lam: complex = 0.01, scale: float = 1.0) -> PartitionedProblem:
    """Oscillator diagonal plus a dense nonsymmetric uniform perturbation, Epstein-Nesbet split.

    ``scale`` sets the entry range relative to the unit diagonal spacing.
    """
    rng = rng_for(seed, "oscillator-uniform")
    delta = rng.uniform(-scale, scale, size=(n, n))
    d = 2.0 * np.arange(n) + 0.5
    p = PartitionedProblem(d, delta, lam, {"kind": "uniform", "n": n, "seed": seed, "scale": scale})
    return epstein_nesbet(p)


def fixture_2x2(lam: complex = 0.1) -> PartitionedProblem:
    return PartitionedProblem([0.0, 1.0], [[0.0, 1.0], [1.0, 0.0]], lam, {"kind": "two-by-two"})


def fixture_3x3(lam: complex = 0.1) -> PartitionedProblem:
    return PartitionedProblem(
        [0.0, 1.0, 3.0],
        [[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]],
        lam,
        {"kind": "three-by-three"},
    )


_BUILDERS = {
    "two-by-two": lambda n, seed, lam, scale: fixture_2x2(lam),
    "three-by-three": lambda n, seed, lam, scale: fixture_3x3(lam),
    "oscillator": lambda n, seed, lam, scale: build_oscillator(n, lam),
    "random": lambda n, seed, lam, scale: build_random_uniform(n, seed, lam, scale),
    "er": lambda n, seed, lam, scale: build_oscillator_er(n, seed, lam),
    "uniform": lambda n, seed, lam, scale: build_oscillator_uniform(n, seed, lam, scale),
}

KINDS = tuple(_BUILDERS)


def describe(p: PartitionedProblem) -> dict[str, Any]:
    """JSON descriptor ``{kind, n, seed, lambda}`` (``lambda`` as ``[re, im]``)."""
    out = {
        "kind": p.meta.get("kind", "custom"),
        "n": p.n,
        "seed": p.meta.get("seed"),
        "lambda": [p.lam.real, p.lam.imag],
    }
    if "scale" in p.meta:
        out["scale"] = p.meta["scale"]
    return out


def from_descriptor(desc: dict[str, Any] | str) -> PartitionedProblem:
    if isinstance(desc, str):
        desc = json.loads(desc)
    kind = desc["kind"]
    if kind not in _BUILDERS:
        raise ValueError(f"unknown problem kind {kind!r}; expected one of {KINDS}")
    lam = desc.get("lambda", 1.0)
    if isinstance(lam, (list, tuple)):
        lam = complex(lam[0], lam[1])
    return _BUILDERS[kind](desc.get("n"), desc.get("seed") or 0, complex(lam), desc.get("scale", 1.0))
