import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dynspec.matrix_core import (
    MatrixMarketError,
    ShapeError,
    as_dense,
    hadamard,
    read_matrix_market,
    row_dot,
    spectral_norm,
    times_transpose,
    triangle,
    write_matrix_market,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def square(n):
    return arrays(np.float64, (n, n), elements=finite)


def test_hadamard_dense_and_sparse_agree():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 5))
    b = sp.random(5, 5, density=0.3, random_state=2, format="csr")
    dense = hadamard(a, b.toarray())
    assert np.allclose(as_dense(hadamard(a, b)), dense)
    assert sp.issparse(hadamard(b, a))


def test_hadamard_shape_mismatch():
    with pytest.raises(ShapeError):
        hadamard(np.ones((2, 2)), np.ones((2, 3)))


def test_triangle_scales_rows_by_diagonal():
    a = np.array([[2.0, 7.0], [5.0, 3.0]])
    b = np.array([[1.0, 1.0], [1.0, 2.0]])
    assert np.allclose(triangle(a, b), [[2, 2], [3, 6]])
    assert np.allclose(triangle(a, b), np.diag(np.diag(a)) @ b)


def test_triangle_needs_square_left_operand():
    with pytest.raises(ShapeError):
        triangle(np.ones((2, 3)), np.ones((3, 3)))


def test_times_transpose_sparse_matches_dense():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
    delta = sp.random(6, 6, density=0.4, random_state=4, format="csr")
    assert np.allclose(times_transpose(a, delta), a @ delta.toarray().T)
    z = a[0]
    assert np.isclose(row_dot(delta, 2, z), (delta @ z)[2])


def test_spectral_norm_identity_and_rank_one():
    assert spectral_norm(np.eye(4)) == pytest.approx(1.0)
    v = np.arange(1.0, 5.0)
    assert spectral_norm(np.outer(v, v)) == pytest.approx(v @ v, rel=1e-9)


def test_spectral_norm_all_ones_in_null_space():
    a = np.array([[1.0, -1.0], [1.0, -1.0]])
    assert spectral_norm(a) == pytest.approx(2.0, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(square(4), square(4))
def test_spectral_norm_submultiplicative(a, b):
    na, nb, nab = spectral_norm(a), spectral_norm(b), spectral_norm(a @ b)
    assert nab <= na * nb * (1 + 1e-6) + 1e-9


@settings(max_examples=30, deadline=None)
@given(square(3))
def test_spectral_norm_matches_svd(a):
    assert spectral_norm(a, tol=1e-13) == pytest.approx(np.linalg.norm(a, 2), rel=1e-5, abs=1e-9)


def test_matrix_market_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    dense = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    write_matrix_market(dense, tmp_path / "a.mtx")
    assert np.allclose(read_matrix_market(tmp_path / "a.mtx"), dense)
    sparse = sp.random(7, 7, density=0.2, random_state=6, format="csr")
    write_matrix_market(sparse, tmp_path / "b.mtx")
    back = read_matrix_market(tmp_path / "b.mtx")
    assert sp.issparse(back)
    assert np.allclose(back.toarray(), sparse.toarray())


def test_matrix_market_symmetric_expanded(tmp_path):
    path = tmp_path / "s.mtx"
    path.write_text("%%MatrixMarket matrix coordinate real symmetric\n3 3 2\n1 1 4.0\n3 1 2.0\n")
    m = read_matrix_market(path).toarray()
    assert m[0, 2] == m[2, 0] == 2.0


def test_matrix_market_malformed(tmp_path):
    path = tmp_path / "bad.mtx"
    path.write_text("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n")
    with pytest.raises(MatrixMarketError):
        read_matrix_market(path)


def test_hadamard_small_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(hadamard(a, [[0, 1], [1, 0]]), [[0, 2], [3, 0]])
    assert np.array_equal(hadamard(a, np.eye(2)), np.diag([1.0, 4.0]))
    theta = np.array([[0.0, -1.0], [1.0, 0.0]])
    delta = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(hadamard(theta, delta.T), [[0, -1], [1, 0]])


def test_triangle_small_examples():
    b = np.arange(4.0).reshape(2, 2)
    assert np.array_equal(triangle(np.eye(2), b), b)
    assert np.array_equal(triangle(np.array([[2.0, 9.0], [9.0, 3.0]]), np.eye(2)), np.diag([2.0, 3.0]))
    zero_diag = np.array([[0.0, 1.0], [4.0, 0.0]])
    assert not np.any(triangle(zero_diag.T, np.eye(2)))


@pytest.mark.parametrize(
    "a, expected",
    [([[0, 1], [1, 0]], 1.0), (np.diag([3.0, -5.0]), 5.0), ([[0, -1], [1, 0]], 1.0)],
)
def test_spectral_norm_examples(a, expected):
    assert spectral_norm(np.asarray(a, dtype=float)) == pytest.approx(expected, rel=1e-9)


def test_matrix_market_one_based_coordinates(tmp_path):
    path = tmp_path / "c.mtx"
    path.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 0.5\n")
    assert read_matrix_market(path).toarray()[0, 1] == 0.5


def test_matrix_market_dense_round_trip_bitwise(tmp_path):
    a = np.array([[0.1, 1 / 3], [np.pi, -2e-300]])
    write_matrix_market(a, tmp_path / "d.mtx")
    assert np.array_equal(read_matrix_market(tmp_path / "d.mtx").real, a)
