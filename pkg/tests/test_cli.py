import csv
import json

import numpy as np
import pytest

from dynspec.cli import main, parse_complex
from dynspec.matrix_core import write_matrix_market


def run(tmp_path, *args):
    code = main([*args, "--out-dir", str(tmp_path)])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["exit_code"] == code
    return code, manifest


@pytest.mark.parametrize(
    "text, value", [("0.3", 0.3), ("0.5i", 0.5j), ("0.1+0.2j", 0.1 + 0.2j), ("1,-2", 1 - 2j), ("-1e-2j", -0.01j)]
)
def test_parse_complex(text, value):
    assert parse_complex(text) == value


def test_solve_two_by_two(tmp_path, capsys):
    code, manifest = run(tmp_path, "solve", "--two-by-two", "--lambda", "0.1")
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    eigs = [complex(*e) for e in report["eigenvalues"]]
    assert eigs[0].real == pytest.approx(-0.00990195, abs=1e-8)
    assert eigs[1].real == pytest.approx(1.00990195, abs=1e-8)
    assert manifest["seed"] == 0 and manifest["version"]
    assert "wall_seconds" in manifest and manifest["config"]["lam"] == [0.1, 0.0]


def test_solve_from_files_at_zero_lambda(tmp_path):
    write_matrix_market(np.diag([0.5, 2.0, 3.5]), tmp_path / "d.mtx")
    write_matrix_market(np.ones((3, 3)), tmp_path / "delta.mtx")
    out = tmp_path / "out"
    code, _ = run(out, "solve", "--file-d", str(tmp_path / "d.mtx"), "--file-delta", str(tmp_path / "delta.mtx"), "--lambda", "0", "--vectors")
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert [e[0] for e in report["eigenvalues"]] == [0.5, 2.0, 3.5]
    assert (out / "eigenvectors.mtx").exists()


def test_solve_oscillator_beyond_series(tmp_path):
    code, _ = run(tmp_path, "solve", "--oscillator", "100", "--lambda", "2.5", "--tol", "1e-10")
    assert code == 0


def test_solve_nonconvergence_exit_code(tmp_path):
    code, _ = run(tmp_path, "solve", "--two-by-two", "--lambda", "1.0", "--trace")
    assert code == 2
    assert (tmp_path / "trace.csv").exists()


def test_solve_homotopy_and_ramp(tmp_path):
    assert run(tmp_path, "solve", "--two-by-two", "--lambda", "1.2", "--homotopy", "4")[0] == 0
    assert run(tmp_path, "solve", "--three-by-three", "--lambda=-0.36+0.3j", "--ramp", "0.9", "--row", "2")[0] == 0


def test_usage_errors_exit_one(tmp_path):
    assert run(tmp_path, "solve", "--bogus")[0] == 1
    assert run(tmp_path, "solve", "--file-d", "missing.mtx")[0] == 1
    assert run(tmp_path, "solve", "--two-by-two", "--tol", "-1")[0] == 1
    assert run(tmp_path, "solve", "--oscillator", "3", "--random", "3")[0] == 1


def test_dominant_degenerate_top_exit_one(tmp_path, capsys):
    write_matrix_market(np.diag([1.0, 4.0, 4.0]), tmp_path / "d.mtx")
    write_matrix_market(np.zeros((3, 3)), tmp_path / "z.mtx")
    code, manifest = run(tmp_path, "dominant", "--file-d", str(tmp_path / "d.mtx"), "--file-delta", str(tmp_path / "z.mtx"))
    assert code == 1
    assert "DegenerateSpectrum" in capsys.readouterr().err
    assert "DegenerateSpectrum" in manifest["error"]


def test_dominant_diagonal_one_iteration(tmp_path):
    write_matrix_market(np.diag([1.0, 4.0, 2.0]), tmp_path / "d.mtx")
    write_matrix_market(np.zeros((3, 3)), tmp_path / "z.mtx")
    code, _ = run(tmp_path, "dominant", "--file-d", str(tmp_path / "d.mtx"), "--file-delta", str(tmp_path / "z.mtx"))
    assert code == 0
    assert json.loads((tmp_path / "dominant.json").read_text())["iterations"] == 1


def test_dominant_sparse_er(tmp_path):
    code, _ = run(tmp_path, "dominant", "--er", "10000", "--lambda", "0.01")
    assert code == 0
    data = json.loads((tmp_path / "dominant.json").read_text())
    assert data["residual"] < 1e-10 and data["iterations"] <= 20


def test_compare_random_ensemble(tmp_path):
    code, _ = run(tmp_path, "compare", "--random", "50", "--lambdas", "0.05", "0", "--samples", "20", "--threads", "2")
    assert code == 0
    with open(tmp_path / "compare.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["sample_id", "lambda", "k_d", "k_rs", "d_converged", "rs_converged"]
    assert len(rows) == 40
    summary = {s["lambda"]: s for s in json.loads((tmp_path / "compare_summary.json").read_text())}
    assert summary["0.05"]["d_success"] == summary["0.05"]["rs_success"] == 1.0
    assert summary["0.05"]["median_k_rs_minus_k_d"] >= 0
    assert summary["0"]["median_k_rs_minus_k_d"] == 0


def test_compare_oscillator_ordering(tmp_path):
    code, _ = run(tmp_path, "compare", "--oscillator", "100", "--lambdas", "0.5", "1.5", "--tol", "1e-10")
    assert code == 0
    with open(tmp_path / "compare.csv") as fh:
        rows = {r["lambda"]: r for r in csv.DictReader(fh)}
    assert int(rows["1.5"]["k_d"]) > int(rows["0.5"]["k_d"])
    assert int(rows["1.5"]["k_rs"]) > int(rows["0.5"]["k_rs"])
    assert int(rows["1.5"]["k_rs"]) > int(rows["1.5"]["k_d"])


def test_scan_two_by_two(tmp_path):
    code, manifest = run(tmp_path, "scan", "--two-by-two", "--grid", "200", "--threads", "2")
    assert code == 0
    assert (tmp_path / "domain.ppm").exists()
    assert len((tmp_path / "domain.csv").read_text().splitlines()) == 200 * 200 + 1
    assert sum(manifest["counts"].values()) == 40_000


def test_scan_overlay_and_ramp(tmp_path):
    (tmp_path / "marks.txt").write_text("# exceptional points\n0 0.5\n0,-0.5\n")
    code, _ = run(tmp_path, "scan", "--three-by-three", "--row", "2", "--ramp", "0.9", "--grid", "20", "--overlay", str(tmp_path / "marks.txt"))
    assert code == 0


def test_bifurcate_two_by_two(tmp_path):
    code, _ = run(tmp_path, "bifurcate", "--two-by-two", "--interval", "0", "1.2", "--samples", "25", "--keep", "8")
    assert code == 0
    with open(tmp_path / "bifurcation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 25 * 8
    first = [float(r["value_re"]) for r in rows if float(r["lambda"]) == 0.0]
    assert first == [0.0] * 8


def test_bench_smoke(tmp_path):
    import time

    t0 = time.perf_counter()
    code, _ = run(tmp_path, "bench", "--random", "16", "--sizes", "16", "--reps", "1")
    assert time.perf_counter() - t0 < 1.0
    assert code == 0
    with open(tmp_path / "bench.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["method", "N", "reps", "median_seconds", "ratio_to_mmt"]
    assert {r["method"] for r in rows} >= {"mmt", "dpt_full", "dpt_dominant", "power_iteration"}


def test_oscillator_export_round_trip(tmp_path):
    code, _ = run(tmp_path, "oscillator-export", "--oscillator", "12")
    assert code == 0
    out = tmp_path / "again"
    code, _ = run(out, "solve", "--file-d", str(tmp_path / "d.mtx"), "--file-delta", str(tmp_path / "delta.mtx"), "--lambda", "0.5")
    assert code == 0


def test_threads_env(monkeypatch):
    from dynspec.cli import default_threads

    monkeypatch.setenv("DYNSPEC_THREADS", "3")
    assert default_threads() == 3
