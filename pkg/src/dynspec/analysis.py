"""Convergence domains of the perturbation maps in the complex lam-plane.

Covers the a-priori contraction radius, grid scans with per-cell
classification, bifurcation diagrams along the real axis, and checks of the
multiplier curves against the exact boundary polynomials shipped in
``data/boundary_polynomials.json``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from .dpt import IterationOptions, chart_multipliers
from .matrix_core import Matrix, as_dense, spectral_norm
from .partition import PartitionedProblem, build_theta, fixture_2x2, fixture_3x3
from .polynomial import RootFinderError, eigenvalues_via_charpoly

OPTIMAL_BALL_RADIUS = math.sqrt(2.0)
CONTRACTION_CONSTANT = 3.0 - 2.0 * math.sqrt(2.0)

CONVERGED, BOUNDED, DIVERGED = 0, 1, 2
CLASS_NAMES = ("Converged", "BoundedNonConverged", "Diverged")

SCAN_OPTIONS = IterationOptions(max_iter=2000, divergence_threshold=1e8)


def guaranteed_radius(theta: np.ndarray, delta: Matrix) -> float:
    """``(3 - 2 sqrt 2) / (|theta| |Delta|)`` in spectral norm.

    Inside this disk the full map sends the ball of radius ``sqrt 2`` around
    the identity into itself and contracts there, so iteration from ``I``
    converges. ``sqrt 2`` (``OPTIMAL_BALL_RADIUS``) is the radius that
    maximizes the bound.
    """
    return CONTRACTION_CONSTANT / (spectral_norm(theta) * spectral_norm(delta))


# --------------------------------------------------------------------------- grids


@dataclass
class DomainGrid:
    re: np.ndarray
    im: np.ndarray
    classes: np.ndarray  # (len(im), len(re)) of CONVERGED / BOUNDED / DIVERGED
    iterations: np.ndarray  # steps to convergence, escape step, or the budget
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.classes.shape

    @property
    def lambdas(self) -> np.ndarray:
        return self.re[None, :] + 1j * self.im[:, None]

    @property
    def escape(self) -> np.ndarray:
        return np.where(self.classes == DIVERGED, self.iterations, 0)

    def counts(self) -> dict[str, int]:
        return {name: int(np.sum(self.classes == i)) for i, name in enumerate(CLASS_NAMES)}


def grid_axis(lo: float, hi: float, res: int) -> np.ndarray:
    """Pixel-corner coordinates ``lo + (hi - lo) * i / res``; hits 0 on symmetric
    ranges with even ``res``."""
    return lo + (hi - lo) * np.arange(res) / res


def _classify_batch(d, delta, lams, rows, theta_rows, opts, alpha):
    """Iterate the map for many lam values at once and classify each orbit."""
    g = lams.size
    r = np.arange(rows.size)
    a = np.zeros((g, rows.size, d.size), dtype=complex)
    a[:, r, rows] = 1.0
    x = a @ delta.T
    out_cls = np.full(g, BOUNDED, dtype=np.int8)
    out_it = np.full(g, opts.max_iter, dtype=np.int32)
    live = np.arange(g)
    gaps = d[None, None, :] - d[rows][None, :, None]
    for k in range(opts.max_iter):
        lam = lams[live]
        lam_k = lam if alpha is None else lam * (1.0 - alpha**k)
        diag = x[:, r, rows]
        new = lam_k[:, None, None] * theta_rows[None] * (x - diag[..., None] * a)
        new[:, r, rows] += 1.0
        with np.errstate(invalid="ignore", over="ignore"):
            step = np.max(np.abs(new - a), axis=(1, 2))
            size = np.max(np.abs(new), axis=(1, 2))
        a = new
        diverged = ~np.isfinite(size) | (size > opts.divergence_threshold)
        with np.errstate(invalid="ignore", over="ignore"):
            x = a @ delta.T
        done = diverged.copy()
        if alpha is None or alpha**k <= opts.tol:
            cand = (step < opts.tol) & ~diverged
            if np.any(cand):
                ac, xc = a[cand], x[cand]
                res = ac * gaps + lam[cand][:, None, None] * (xc - xc[:, r, rows][..., None] * ac)
                rel = np.max(np.abs(res), axis=2) / np.max(np.abs(ac), axis=2)
                ok = np.zeros(live.size, dtype=bool)
                ok[np.flatnonzero(cand)[np.max(rel, axis=1) < opts.residual_tol]] = True
                out_cls[live[ok]] = CONVERGED
                out_it[live[ok]] = k + 1
                done |= ok
        out_cls[live[diverged]] = DIVERGED
        out_it[live[diverged]] = k + 1
        if np.any(done):
            keep = ~done
            live, a, x = live[keep], a[keep], x[keep]
        if live.size == 0:
            break
    return out_cls, out_it


def classify_lambdas(
    p: PartitionedProblem,
    lams,
    row: int | None = None,
    alpha: float | None = None,
    opts: IterationOptions | None = None,
    threads: int = 1,
    chunk: int = 16384,
) -> tuple[np.ndarray, np.ndarray]:
    """Classification and iteration count for each lam (vectorized over lam)."""
    opts = opts or SCAN_OPTIONS
    lams = np.asarray(lams, dtype=complex).ravel()
    d = p.d
    delta = as_dense(p.delta)
    theta = build_theta(d)
    rows = np.arange(p.n) if row is None else np.array([row])
    theta_rows = theta[rows]
    pieces = [lams[i : i + chunk] for i in range(0, lams.size, chunk)] or [lams]

    def work(piece):
        return _classify_batch(d, delta, piece, rows, theta_rows, opts, alpha)

    if threads > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, pieces))
    else:
        results = [work(piece) for piece in pieces]
    return np.concatenate([c for c, _ in results]), np.concatenate([i for _, i in results])


def scan_domain(
    p: PartitionedProblem,
    re_range: tuple[float, float] = (-1.2, 1.2),
    im_range: tuple[float, float] = (-1.2, 1.2),
    res: int | tuple[int, int] = 200,
    row: int | None = None,
    alpha: float | None = None,
    opts: IterationOptions | None = None,
    threads: int = 1,
) -> DomainGrid:
    """Classify every lam of a rectangular grid.

    ``row=None`` iterates the full map, an integer iterates that row's map;
    ``alpha`` switches to the ramped schedule ``lam (1 - alpha^k)``.
    The ``lam`` stored in ``p`` is ignored.
    """
    res_re, res_im = (res, res) if isinstance(res, int) else res
    if res_re < 1 or res_im < 1:
        raise ValueError("grid must be nonempty")
    re = grid_axis(*re_range, res_re)
    im = grid_axis(*im_range, res_im)
    lams = re[None, :] + 1j * im[:, None]
    cls, its = classify_lambdas(p, lams, row, alpha, opts, threads)
    meta = {
        "mode": "full" if row is None else f"row {row}",
        "alpha": alpha,
        "re_range": list(re_range),
        "im_range": list(im_range),
    }
    return DomainGrid(re, im, cls.reshape(res_im, res_re), its.reshape(res_im, res_re), meta)


def axis_crossings(grid: DomainGrid) -> dict[str, float]:
    """Where the converged region containing 0 ends along the four half-axes.

    Each value is the midpoint between the last converged cell and the next
    one, walking outward from the cell at the origin.
    """
    i0 = int(np.argmin(np.abs(grid.im)))
    j0 = int(np.argmin(np.abs(grid.re)))

    def walk(line, coords, start, direction):
        idx = start
        while 0 <= idx + direction < len(line) and line[idx + direction] == CONVERGED:
            idx += direction
        if not 0 <= idx + direction < len(line):
            return float("nan")
        return float(0.5 * (coords[idx] + coords[idx + direction]))

    out = {}
    if grid.classes[i0, j0] != CONVERGED:
        return {k: float("nan") for k in ("re+", "re-", "im+", "im-")}
    out["re+"] = walk(grid.classes[i0], grid.re, j0, 1)
    out["re-"] = walk(grid.classes[i0], grid.re, j0, -1)
    out["im+"] = walk(grid.classes[:, j0], grid.im, i0, 1)
    out["im-"] = walk(grid.classes[:, j0], grid.im, i0, -1)
    return out


def bifurcation_scan(
    p: PartitionedProblem,
    row: int,
    interval: tuple[float, float],
    samples: int = 400,
    transient: int = 500,
    keep: int = 64,
    coordinate: int | None = None,
    divergence_threshold: float = 1e8,
) -> list[tuple[float, np.ndarray]]:
    """Attractor samples of one coordinate of ``F_row`` along a real lam interval.

    ``coordinate`` defaults to the first index other than ``row``. Orbits that
    escape yield an empty sample array.
    """
    lo, hi = interval
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("interval must be finite")
    if coordinate is None:
        coordinate = 1 if row == 0 else 0
    lams = np.linspace(lo, hi, samples).astype(complex)
    delta = as_dense(p.delta)
    th = build_theta(p.d)[row]
    z = np.zeros((samples, p.n), dtype=complex)
    z[:, row] = 1.0
    alive = np.ones(samples, dtype=bool)
    kept = np.empty((samples, keep), dtype=complex)
    for k in range(transient + keep):
        with np.errstate(invalid="ignore", over="ignore"):
            dz = z @ delta.T
            z = lams[:, None] * th[None, :] * (dz - dz[:, row : row + 1] * z)
            z[:, row] += 1.0
            bad = ~np.isfinite(z).all(axis=1) | (np.abs(z).max(axis=1) > divergence_threshold)
        alive &= ~bad
        z[bad] = 0.0
        if k >= transient:
            kept[:, k - transient] = z[:, coordinate]
    out = []
    for i, lam in enumerate(lams.real):
        vals = kept[i] if alive[i] else np.empty(0, dtype=complex)
        out.append((float(lam), vals.real.copy() if not np.any(vals.imag) else vals))
    return out


# --------------------------------------------------------------------------- boundary curves


@dataclass(frozen=True)
class BoundaryPolynomial:
    name: str
    row: int | None
    terms: tuple[tuple[int, int, int], ...]  # (coefficient, degree in lam, degree in mu)

    def __call__(self, lam, mu):
        return eval_boundary_poly(self, lam, mu)


@lru_cache(maxsize=1)
def _poly_table() -> dict:
    text = resources.files("dynspec").joinpath("data/boundary_polynomials.json").read_text()
    return json.loads(text)


def boundary_polynomial(name: str, row: int | None = None) -> BoundaryPolynomial:
    """Look up ``"two-by-two"`` (any row) or ``"three-by-three"`` with row 0, 1, 2."""
    for entry in _poly_table()["polynomials"]:
        if entry["name"] == name and (entry["row"] is None or entry["row"] == row):
            terms = tuple(tuple(int(v) for v in t) for t in entry["terms"])
            return BoundaryPolynomial(name, entry["row"], terms)
    raise KeyError(f"no boundary polynomial for {name!r}, row {row!r}")


def eval_boundary_poly(b: BoundaryPolynomial, lam: complex, mu: complex) -> complex:
    """Horner evaluation: inner polynomial in ``mu`` per power of ``lam``."""
    deg_l = max(t[1] for t in b.terms)
    deg_m = max(t[2] for t in b.terms)
    table = np.zeros((deg_l + 1, deg_m + 1))
    for c, i, j in b.terms:
        table[i, j] += c
    acc = 0j
    for i in range(deg_l, -1, -1):
        inner = 0j
        for j in range(deg_m, -1, -1):
            inner = inner * mu + table[i, j]
        acc = acc * lam + inner
    return complex(acc)


def poly_scale(b: BoundaryPolynomial, lam: complex, mu: complex) -> float:
    """Largest monomial magnitude at ``(lam, mu)``, used to normalize residuals."""
    return max(abs(c) * abs(lam) ** i * abs(mu) ** j for c, i, j in b.terms)


def fixed_points(p: PartitionedProblem, n: int, newton_steps: int = 8) -> list[np.ndarray]:
    """All fixed points of ``F_n`` in the chart ``z[n] = 1`` for small problems.

    N = 2 solves the scalar quadratic directly. Larger N uses the
    eigenvector correspondence: eigenvalues from the characteristic polynomial,
    one linear solve per eigenvalue, then Newton polishing on ``z - F_n(z)``.
    Points at infinity in the chart are dropped; duplicates merged at 1e-8.
    """
    lam = p.lam
    delta = as_dense(p.delta)
    d = p.d
    if p.n == 1:
        return [np.ones(1, dtype=complex)]
    if p.n == 2:
        m = 1 - n
        t = lam / (d[n] - d[m])
        qa = t * delta[n, m]
        qb = 1.0 - t * (delta[m, m] - delta[n, n])
        qc = -t * delta[m, n]
        if qa == 0:
            roots = [-qc / qb] if qb != 0 else []
        else:
            disc = np.sqrt(complex(qb * qb - 4 * qa * qc))
            # stable pair of roots
            q = -0.5 * (qb + (disc if (np.conj(qb) * disc).real >= 0 else -disc))
            roots = [q / qa, qc / q] if q != 0 else [0j, 0j]
        out = []
        for x in roots:
            z = np.ones(2, dtype=complex)
            z[m] = x
            out.append(z)
        return out

    m_full = np.diag(d) + lam * delta
    eigs = eigenvalues_via_charpoly(m_full)
    keep = [k for k in range(p.n) if k != n]
    th = build_theta(d)[n]
    found: list[np.ndarray] = []
    for eps in eigs:
        shifted = m_full - eps * np.eye(p.n)
        try:
            sol = np.linalg.solve(shifted[np.ix_(keep, keep)], -shifted[keep, n])
        except np.linalg.LinAlgError:
            continue
        z = np.ones(p.n, dtype=complex)
        z[keep] = sol
        for _ in range(newton_steps):
            dz = delta @ z
            g = z - (lam * th * (dz - dz[n] * z))
            g[n] = 0.0
            jac = lam * th[:, None] * (delta - dz[n] * np.eye(p.n) - np.outer(z, delta[n]))
            sys = np.eye(len(keep)) - jac[np.ix_(keep, keep)]
            try:
                z[keep] -= np.linalg.solve(sys, g[keep])
            except np.linalg.LinAlgError:
                break
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > 1e12:
            continue
        if all(np.max(np.abs(z - f)) > 1e-8 for f in found):
            found.append(z)
    return found


@dataclass
class CurveValidation:
    max_residual: float  # max over samples of the best (fixed point, multiplier) residual
    max_all_pairs: float  # max over samples of the worst pair
    per_sample: list = field(default_factory=list)  # (lam, best, worst, largest |mu|)
    skipped: list = field(default_factory=list)


def validate_multiplier_curve(
    fixture: str, n: int, lambda_samples: Sequence[complex]
) -> CurveValidation:
    """Check that multipliers of the fixed points of ``F_n`` lie on the curve ``P(lam, mu) = 0``.

    Residuals are ``|P| / max monomial`` at each ``(lam, mu)``.
    """
    if fixture in ("2x2", "two-by-two"):
        build, poly = fixture_2x2, boundary_polynomial("two-by-two")
    elif fixture in ("3x3", "three-by-three"):
        build, poly = fixture_3x3, boundary_polynomial("three-by-three", n)
    else:
        raise ValueError(f"unknown fixture {fixture!r}")
    best_all, worst_all = 0.0, 0.0
    per, skipped = [], []
    for lam in lambda_samples:
        p = build(complex(lam))
        try:
            pts = fixed_points(p, n)
            pairs, mags = [], [0.0]
            for z in pts:
                for mu in chart_multipliers(z, n, p):
                    scale = poly_scale(poly, lam, mu)
                    val = abs(eval_boundary_poly(poly, lam, mu))
                    pairs.append(val / scale if scale > 0 else val)
                    mags.append(abs(mu))
        except (RootFinderError, np.linalg.LinAlgError) as exc:
            skipped.append((complex(lam), str(exc)))
            continue
        if not pairs:
            skipped.append((complex(lam), "no fixed points found"))
            continue
        per.append((complex(lam), min(pairs), max(pairs), max(mags)))
        best_all = max(best_all, min(pairs))
        worst_all = max(worst_all, max(pairs))
    return CurveValidation(best_all, worst_all, per, skipped)


# --------------------------------------------------------------------------- output


def _shade(grid: DomainGrid) -> np.ndarray:
    img = np.zeros(grid.shape + (3,), dtype=np.uint8)
    budget = max(2, int(np.max(grid.iterations)))
    bounded = grid.classes == BOUNDED
    img[bounded] = 48
    div = grid.classes == DIVERGED
    if np.any(div):
        # darker = slower escape
        t = np.log(np.maximum(grid.iterations[div], 1)) / np.log(budget)
        img[div] = (90 + 150 * (1.0 - np.clip(t, 0, 1)))[:, None].astype(np.uint8)
    return img[::-1]  # top row = largest imaginary part


def render_domain(
    grid: DomainGrid,
    path: str | os.PathLike,
    csv_path: str | os.PathLike | None = None,
    overlay: Sequence[complex] = (),
) -> None:
    """Binary PPM (P6): black converged, dark grey bounded, grey by escape time
    for divergent cells, red at each overlay lam. Optionally the grid as CSV."""
    img = _shade(grid)
    h, w = grid.shape
    for lam in overlay:
        j = int(np.argmin(np.abs(grid.re - complex(lam).real)))
        i = int(np.argmin(np.abs(grid.im - complex(lam).imag)))
        img[h - 1 - i, j] = (255, 0, 0)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    if csv_path is not None:
        write_grid_csv(grid, csv_path)


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def write_grid_csv(grid: DomainGrid, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "class", "iters"])
        for i, im in enumerate(grid.im):
            for j, re in enumerate(grid.re):
                w.writerow([repr(float(re)), repr(float(im)), CLASS_NAMES[grid.classes[i, j]], int(grid.iterations[i, j])])


def read_grid_csv(path: str | os.PathLike) -> DomainGrid:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    re = np.array(sorted({float(r["re"]) for r in rows}))
    im = np.array(sorted({float(r["im"]) for r in rows}))
    cls = np.empty((im.size, re.size), dtype=np.int8)
    its = np.empty((im.size, re.size), dtype=np.int32)
    col = {v: j for j, v in enumerate(re)}
    line = {v: i for i, v in enumerate(im)}
    for r in rows:
        i, j = line[float(r["im"])], col[float(r["re"])]
        cls[i, j] = CLASS_NAMES.index(r["class"])
        its[i, j] = int(r["iters"])
    return DomainGrid(re, im, cls, its)
