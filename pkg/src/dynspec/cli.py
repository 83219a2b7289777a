"""Command-line front end: ``dynspec <subcommand> [problem flags] [options]``.

Exit codes: 0 success / converged, 2 legitimate non-convergence, 1 usage or
input error. Every run writes ``manifest.json`` into ``--out-dir``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import bifurcation_scan, render_domain, scan_domain
from .baselines import matmul_time, median_time, power_iteration, rayleigh_quotient_iteration
from .dpt import (
    IterationOptions,
    dominant_eigenpair,
    homotopy_solve,
    iterate_full,
    iterate_ramped,
    iterate_single,
)
from .matrix_core import MatrixMarketError, as_dense, is_sparse, read_matrix_market, write_matrix_market
from .partition import DegenerateSpectrum, PartitionedProblem, describe, from_descriptor
from .rspt import RS_MAX_ORDER, compare_orders

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2

_SIZED_KINDS = ("oscillator", "random", "er", "uniform")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with "not converged"
    def error(self, message):
        raise UsageError(message)


def parse_complex(text: str) -> complex:
    """Accepts ``0.3``, ``0.3+0.2j``, ``0.5i``, ``-1e-2j`` or ``re,im``."""
    s = text.strip().replace(" ", "")
    if "," in s:
        re_part, im_part = s.split(",", 1)
        return complex(float(re_part), float(im_part))
    try:
        return complex(s.replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def default_threads() -> int:
    env = os.environ.get("DYNSPEC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


# --------------------------------------------------------------------------- problem flags


def _add_problem(sp: argparse.ArgumentParser, default_lambda: str | None = "0.1") -> None:
    g = sp.add_argument_group("problem")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--two-by-two", action="store_true", help="D = diag(0, 1), Delta = [[0, 1], [1, 0]]")
    src.add_argument("--three-by-three", action="store_true", help="3x3 fixture with D = diag(0, 1, 3)")
    src.add_argument("--oscillator", type=int, metavar="N", help="harmonic oscillator with a delta potential")
    src.add_argument("--random", type=int, metavar="N", help="D = 1..N, dense uniform Delta")
    src.add_argument("--er", type=int, metavar="N", help="oscillator diagonal plus sparse ER Laplacian")
    src.add_argument("--uniform", type=int, metavar="N", help="oscillator diagonal plus dense uniform Delta")
    src.add_argument("--descriptor", metavar="JSON", help="problem descriptor as a JSON string or file")
    src.add_argument("--file-d", metavar="PATH", help="Matrix Market file for D (needs --file-delta)")
    g.add_argument("--file-delta", metavar="PATH", help="Matrix Market file for Delta")
    g.add_argument("--lambda", dest="lam", type=parse_complex, default=None if default_lambda is None else parse_complex(default_lambda))
    g.add_argument("--scale", type=float, default=1.0, help="entry scale for uniform perturbations")


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--seed", type=int, default=0, help="single source of randomness")
    sp.add_argument("--threads", type=int, default=None, help="worker threads (env DYNSPEC_THREADS)")
    sp.add_argument("--out-dir", default=".", help="directory for all outputs")


def _add_iteration(sp: argparse.ArgumentParser, max_iter: int = 10_000) -> None:
    g = sp.add_argument_group("iteration")
    g.add_argument("--tol", type=float, default=1e-12)
    g.add_argument("--residual-tol", type=float, default=1e-10)
    g.add_argument("--max-iter", type=int, default=max_iter)
    g.add_argument("--divergence-threshold", type=float, default=1e8)


def _options(args) -> IterationOptions:
    try:
        return IterationOptions(
            tol=args.tol,
            residual_tol=args.residual_tol,
            max_iter=args.max_iter,
            divergence_threshold=args.divergence_threshold,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_diagonal(path: str) -> np.ndarray:
    m = read_matrix_market(path)
    if m.ndim == 2 and 1 in m.shape:
        return np.asarray(as_dense(m)).ravel()
    dense = as_dense(m) if not is_sparse(m) else None
    if dense is not None:
        off = dense - np.diag(np.diag(dense))
    else:
        off = m - scipy.sparse.diags(m.diagonal())
    if np.any(np.abs(as_dense(off)) > 0):
        raise UsageError(f"{path}: D must be diagonal")
    return np.asarray(m.diagonal())


def build_problem(args, size: int | None = None) -> PartitionedProblem:
    """The problem selected by the flags; ``size`` overrides N for sized kinds."""
    lam = 1.0 if args.lam is None else args.lam
    if args.file_d or args.file_delta:
        if not (args.file_d and args.file_delta):
            raise UsageError("--file-d and --file-delta must be given together")
        d = _read_diagonal(args.file_d)
        delta = read_matrix_market(args.file_delta)
        return PartitionedProblem(d, delta, lam, {"kind": "files"})
    if args.descriptor:
        text = args.descriptor
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text()
        desc = json.loads(text)
        if args.lam is not None:
            desc["lambda"] = [lam.real, lam.imag]
        if size is not None:
            desc["n"] = size
        return from_descriptor(desc)
    kind, n = "two-by-two", None
    if args.three_by_three:
        kind = "three-by-three"
    for name in _SIZED_KINDS:
        value = getattr(args, name)
        if value is not None:
            kind, n = name, value
    if size is not None and kind in _SIZED_KINDS:
        n = size
    if n is not None and n < 1:
        raise UsageError("problem size must be positive")
    desc = {"kind": kind, "n": n, "seed": args.seed, "lambda": [lam.real, lam.imag], "scale": args.scale}
    return from_descriptor(desc)


def _problem_kind(args) -> str:
    for name in _SIZED_KINDS:
        if getattr(args, name) is not None:
            return name
    return "three-by-three" if args.three_by_three else "two-by-two"


# --------------------------------------------------------------------------- commands


def cmd_solve(args, out: Path, manifest: dict) -> int:
    p = build_problem(args)
    manifest["problem"] = describe(p)
    opts = _options(args)
    if args.homotopy:
        rep = homotopy_solve(p, args.homotopy, opts)
    elif args.ramp is not None:
        rep = iterate_ramped(p, args.ramp, opts, row=args.row, trace=bool(args.trace))
    elif args.row is not None:
        rep = iterate_single(p, args.row, opts, trace=bool(args.trace))
    else:
        rep = iterate_full(p, opts, trace=bool(args.trace))
    payload = rep.to_dict()
    if rep.info:
        payload["info"] = rep.info
    (out / "report.json").write_text(json.dumps(payload, indent=2))
    manifest["outputs"].append("report.json")
    if args.trace:
        rep.write_trace(out / "trace.csv")
        manifest["outputs"].append("trace.csv")
    if args.vectors:
        write_matrix_market(np.atleast_2d(rep.a), out / "eigenvectors.mtx", "rows are eigenvectors")
        manifest["outputs"].append("eigenvectors.mtx")
    print(json.dumps(payload))
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_dominant(args, out: Path, manifest: dict) -> int:
    p = build_problem(args)
    manifest["problem"] = describe(p)
    t0 = time.perf_counter()
    res = dominant_eigenpair(p, _options(args))
    wall = time.perf_counter() - t0
    payload = {
        "eigenvalue": [res.eigenvalue.real, res.eigenvalue.imag],
        "residual": res.residual,
        "iterations": res.iterations,
        "status": res.status.value,
        "index": res.index,
        "wall_seconds": wall,
    }
    (out / "dominant.json").write_text(json.dumps(payload, indent=2))
    manifest["outputs"].append("dominant.json")
    print(
        f"eigenvalue {res.eigenvalue.real:.15g}{res.eigenvalue.imag:+.3g}j  residual {res.residual:.3e}  "
        f"iterations {res.iterations}  time {wall:.3f}s  status {res.status.value}"
    )
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_compare(args, out: Path, manifest: dict) -> int:
    lams = args.lambdas or [0.05, 0.1, 0.2, 0.3]
    kind = _problem_kind(args)
    seeds = [args.seed + i for i in range(args.samples)]
    if kind not in ("random", "uniform", "er"):
        seeds = seeds[:1]  # deterministic fixtures: one sample per lambda
    jobs = [(sid, seed, lam) for lam in lams for sid, seed in enumerate(seeds)]
    opts = _options(args)

    def run(job):
        sid, seed, lam = job
        sub = argparse.Namespace(**{**vars(args), "seed": seed, "lam": lam})
        r = compare_orders(build_problem(sub), tol=args.tol, max_order=args.max_order, opts=opts)
        return sid, lam, r

    with ThreadPoolExecutor(args.threads) as pool:
        results = list(pool.map(run, jobs))
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "lambda", "k_d", "k_rs", "d_converged", "rs_converged"])
        for sid, lam, r in results:
            w.writerow([sid, _fmt_complex(lam), r.k_d, r.k_rs, int(r.d_converged), int(r.rs_converged)])
    summary = []
    for lam in lams:
        rows = [r for _, l2, r in results if l2 == lam]
        both = [r.k_rs - r.k_d for r in rows if r.d_converged and r.rs_converged]
        summary.append(
            {
                "lambda": _fmt_complex(lam),
                "samples": len(rows),
                "d_success": float(np.mean([r.d_converged for r in rows])),
                "rs_success": float(np.mean([r.rs_converged for r in rows])),
                "median_k_rs_minus_k_d": float(np.median(both)) if both else None,
            }
        )
    (out / "compare_summary.json").write_text(json.dumps(summary, indent=2))
    manifest["outputs"] += ["compare.csv", "compare_summary.json"]
    for s in summary:
        med = "n/a" if s["median_k_rs_minus_k_d"] is None else f"{s['median_k_rs_minus_k_d']:g}"
        print(f"lambda {s['lambda']}: success D {s['d_success']:.2f} RS {s['rs_success']:.2f}  median K_RS-K_D {med}")
    return EXIT_OK


def _fmt_complex(z: complex) -> str:
    z = complex(z)
    return f"{z.real:g}" if z.imag == 0 else f"{z.real:g}{z.imag:+g}j"


def _read_overlay(path: str) -> list[complex]:
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            parts = line.replace(",", " ").split()
            out.append(complex(float(parts[0]), float(parts[1])) if len(parts) == 2 else parse_complex(parts[0]))
    return out


def cmd_scan(args, out: Path, manifest: dict) -> int:
    p = build_problem(args)
    manifest["problem"] = describe(p)
    res = (args.grid, args.grid) if args.grid_im is None else (args.grid, args.grid_im)
    if min(res) < 1:
        raise UsageError("grid must be nonempty")
    grid = scan_domain(
        p,
        tuple(args.re_range),
        tuple(args.im_range),
        res,
        row=args.row,
        alpha=args.ramp,
        opts=_options(args),
        threads=args.threads,
    )
    overlay = _read_overlay(args.overlay) if args.overlay else ()
    render_domain(grid, out / "domain.ppm", out / "domain.csv", overlay)
    manifest["outputs"] += ["domain.ppm", "domain.csv"]
    manifest["counts"] = grid.counts()
    print(json.dumps(grid.counts()))
    return EXIT_OK


def cmd_bifurcate(args, out: Path, manifest: dict) -> int:
    p = build_problem(args)
    manifest["problem"] = describe(p)
    lo, hi = args.interval
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise UsageError("interval must be finite")
    if args.row < 0 or args.row >= p.n:
        raise UsageError(f"row {args.row} out of range for N={p.n}")
    data = bifurcation_scan(p, args.row, (lo, hi), args.samples, args.transient, args.keep, args.coordinate)
    with open(out / "bifurcation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "sample", "value_re", "value_im"])
        for lam, vals in data:
            for i, v in enumerate(vals):
                w.writerow([repr(lam), i, repr(float(np.real(v))), repr(float(np.imag(v)))])
    manifest["outputs"].append("bifurcation.csv")
    print(f"{len(data)} lambda samples, {sum(1 for _, v in data if v.size == 0)} escaped")
    return EXIT_OK


def cmd_bench(args, out: Path, manifest: dict) -> int:
    sizes = args.sizes or [16, 64, 256]
    opts = _options(args)
    rows = []
    for n in sizes:
        p = build_problem(args, size=n)
        m = p.matrix()
        mmt = matmul_time(m, args.reps)
        top = int(np.argmax(p.d.real))
        methods = {
            "mmt": lambda: None,
            "dpt_full": lambda: iterate_full(p, opts),
            "dpt_dominant": lambda: dominant_eigenpair(p, opts),
            "power_iteration": lambda: power_iteration(m, tol=args.tol, max_iter=opts.max_iter),
        }
        if n <= args.rqi_max_n:
            methods["rayleigh_quotient"] = lambda: rayleigh_quotient_iteration(m, np.eye(1, n, top)[0] + 1e-3)
        if p.sparse:
            methods.pop("dpt_full")
        for name, fn in methods.items():
            t = mmt if name == "mmt" else median_time(fn, args.reps)
            rows.append((name, n, args.reps, t, t / mmt if mmt > 0 else float("nan")))
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "N", "reps", "median_seconds", "ratio_to_mmt"])
        w.writerows(rows)
    manifest["outputs"].append("bench.csv")
    for r in rows:
        print(f"{r[0]:18s} N={r[1]:<7d} {r[3]:.3e}s  x{r[4]:.2f} MMT")
    return EXIT_OK


def cmd_oscillator_export(args, out: Path, manifest: dict) -> int:
    if args.oscillator is None and not any(
        [args.two_by_two, args.three_by_three, args.random, args.er, args.uniform, args.descriptor, args.file_d]
    ):
        args.oscillator = 100
    p = build_problem(args)
    manifest["problem"] = describe(p)
    write_matrix_market(np.diag(p.d) if not p.sparse else scipy.sparse.diags(p.d), out / "d.mtx", "unperturbed diagonal")
    write_matrix_market(p.delta, out / "delta.mtx", "perturbation")
    (out / "problem.json").write_text(json.dumps(describe(p), indent=2))
    manifest["outputs"] += ["d.mtx", "delta.mtx", "problem.json"]
    print(f"wrote N={p.n} problem to {out}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "dominant": cmd_dominant,
    "compare": cmd_compare,
    "scan": cmd_scan,
    "bifurcate": cmd_bifurcate,
    "bench": cmd_bench,
    "oscillator-export": cmd_oscillator_export,
}


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynspec", description="Eigenpairs of D + lam*Delta by dynamical perturbation theory.")
    parser.add_argument("--version", action="version", version=f"dynspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="full eigendecomposition by fixed-point iteration")
    _add_problem(s)
    _add_common(s)
    _add_iteration(s)
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--homotopy", type=int, metavar="Q", help="reach lambda in Q re-diagonalized stages")
    mode.add_argument("--ramp", type=float, metavar="ALPHA", help="ramp lambda_k = lambda (1 - ALPHA^k)")
    s.add_argument("--row", type=int, help="iterate only this row's map")
    s.add_argument("--trace", action="store_true", help="write per-iteration trace.csv")
    s.add_argument("--vectors", action="store_true", help="write eigenvectors.mtx")

    s = sub.add_parser("dominant", help="eigenpair continuing the largest diagonal entry")
    _add_problem(s, default_lambda="0.01")
    _add_common(s)
    _add_iteration(s)

    s = sub.add_parser("compare", help="iterations of D-PT versus orders of the RS series")
    _add_problem(s)
    _add_common(s)
    _add_iteration(s)
    s.add_argument("--lambdas", type=parse_complex, nargs="+")
    s.add_argument("--samples", type=int, default=20, help="seeds per lambda for random ensembles")
    s.add_argument("--max-order", type=int, default=RS_MAX_ORDER)

    s = sub.add_parser("scan", help="classify a grid of complex lambda values")
    _add_problem(s, default_lambda=None)
    _add_common(s)
    _add_iteration(s, max_iter=2000)
    s.add_argument("--grid", type=int, default=200, help="cells per axis (real axis if --grid-im is set)")
    s.add_argument("--grid-im", type=int)
    s.add_argument("--re-range", type=float, nargs=2, default=[-1.2, 1.2])
    s.add_argument("--im-range", type=float, nargs=2, default=[-1.2, 1.2])
    s.add_argument("--row", type=int, help="scan the single-row map")
    s.add_argument("--ramp", type=float, metavar="ALPHA")
    s.add_argument("--overlay", metavar="PATH", help="lambda values to mark in red, one per line")

    s = sub.add_parser("bifurcate", help="attractor of one row's map along a real lambda interval")
    _add_problem(s, default_lambda=None)
    _add_common(s)
    s.add_argument("--interval", type=float, nargs=2, default=[0.0, 1.2])
    s.add_argument("--samples", type=int, default=400)
    s.add_argument("--transient", type=int, default=500)
    s.add_argument("--keep", type=int, default=64)
    s.add_argument("--row", type=int, default=0)
    s.add_argument("--coordinate", type=int)

    s = sub.add_parser("bench", help="timings relative to one matrix product")
    _add_problem(s)
    _add_common(s)
    _add_iteration(s)
    s.add_argument("--sizes", type=int, nargs="+")
    s.add_argument("--reps", type=int, default=3)
    s.add_argument("--rqi-max-n", type=int, default=2000)

    s = sub.add_parser("oscillator-export", help="write D and Delta as Matrix Market files")
    _add_problem(s)
    _add_common(s)
    return parser


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _out_dir_hint(argv: list[str]) -> str:
    # lets the manifest land in the requested directory even when parsing fails
    for i, tok in enumerate(argv):
        if tok == "--out-dir" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--out-dir="):
            return tok.split("=", 1)[1]
    return "."


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    t0 = time.perf_counter()
    manifest: dict = {
        "argv": argv,
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "outputs": [],
    }
    out = Path(_out_dir_hint(argv))
    code = EXIT_INPUT
    try:
        args = make_parser().parse_args(argv)
        if args.threads is None:
            args.threads = default_threads()
        args.threads = max(1, args.threads)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest["command"] = args.command
        manifest["seed"] = args.seed
        manifest["config"] = {k: _jsonable(v) for k, v in vars(args).items()}
        code = COMMANDS[args.command](args, out, manifest)
    except UsageError as exc:
        print(f"dynspec: usage error: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
    except DegenerateSpectrum as exc:
        print(f"dynspec: DegenerateSpectrum: {exc}", file=sys.stderr)
        manifest["error"] = f"DegenerateSpectrum: {exc}"
    except (ValueError, MatrixMarketError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"dynspec: input error: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
    manifest["exit_code"] = code
    manifest["wall_seconds"] = time.perf_counter() - t0
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    except OSError:
        pass
    return code


if __name__ == "__main__":
    sys.exit(main())
