import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from dynspec.partition import (
    DegenerateSpectrum,
    PartitionedProblem,
    _pair_from_index,
    build_er_laplacian,
    build_oscillator,
    build_oscillator_er,
    build_random_uniform,
    build_theta,
    check_simple,
    describe,
    epstein_nesbet,
    from_descriptor,
    hermite_at_zero,
    partition,
    theta_row,
)


def test_partition_splits_diagonal():
    p = partition(np.array([[0.0, 0.1], [0.1, 1.0]]))
    assert np.array_equal(p.d, [0, 1])
    assert np.array_equal(p.delta, [[0, 0.1], [0.1, 0]])
    assert p.lam == 1


def test_partition_round_trip_dense_and_sparse():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(6, 6))
    assert np.array_equal(partition(m).matrix(), m)
    ms = sp.random(6, 6, density=0.5, random_state=1, format="csr") + sp.diags(np.arange(6.0))
    ps = partition(ms)
    assert ps.sparse
    assert np.allclose(ps.matrix().toarray(), ms.toarray())


def test_partition_of_diagonal_matrix_has_zero_perturbation():
    assert not np.any(partition(np.diag([1.0, 2.0])).delta)


def test_matvec_matches_matrix():
    p = build_random_uniform(5, seed=3, lam=0.2)
    z = np.arange(5.0) + 1j
    assert np.allclose(p.matvec(z), p.matrix() @ z)


def test_epstein_nesbet_moves_diagonal():
    p = PartitionedProblem([0.0, 1.0], [[2.0, 1.0], [1.0, 3.0]], 0.5)
    q = epstein_nesbet(p)
    assert np.allclose(q.d, [1.0, 2.5])
    assert np.allclose(q.matrix(), p.matrix())
    assert not np.any(np.diag(q.delta))


def test_theta_examples():
    assert np.array_equal(build_theta([0.0, 1.0]), [[0, -1], [1, 0]])
    th = build_theta([0.0, 1.0, 3.0])
    assert th[0, 2] == pytest.approx(-1 / 3)
    assert th[2, 1] == pytest.approx(1 / 2)
    assert not np.any(np.diag(th))
    assert np.allclose(theta_row([0.0, 1.0, 3.0], 1), th[1])


def test_theta_degenerate():
    with pytest.raises(DegenerateSpectrum) as info:
        build_theta([0.0, 1e-16])
    assert info.value.pair == (0, 1)
    with pytest.raises(DegenerateSpectrum):
        check_simple([1.0, 2.0, 1.0 + 1j, 1.0 + 1j])
    check_simple([1.0, 1.0 + 1e-6])


def test_oscillator_values():
    p = build_oscillator(1)
    assert p.d[0] == 0.5
    assert p.delta[0, 0].real == pytest.approx(np.pi**-0.5, rel=1e-12)
    assert hermite_at_zero(2)[1] == pytest.approx(-0.531126, abs=1e-6)
    assert np.array_equal(build_oscillator(3).d, [0.5, 2.5, 4.5])


def test_hermite_ratio_recurrence_matches_closed_form():
    from math import factorial, pi, sqrt

    vals = hermite_at_zero(20)
    for n in range(20):
        # H_{2n}(0) = (-1)^n (2n)! / n!
        h = (-1) ** n * factorial(2 * n) / factorial(n)
        ref = h / sqrt(2 ** (2 * n) * factorial(2 * n) * sqrt(pi))
        assert vals[n] == pytest.approx(ref, rel=1e-12)
    assert np.all(np.isfinite(hermite_at_zero(2000)))


def test_random_uniform_deterministic_and_bounded():
    a = build_random_uniform(30, seed=11)
    b = build_random_uniform(30, seed=11)
    assert np.array_equal(a.delta, b.delta)
    assert not np.array_equal(a.delta, build_random_uniform(30, seed=12).delta)
    assert np.all(np.abs(a.delta) <= 1)
    assert np.array_equal(build_random_uniform(4, seed=0).d, [1, 2, 3, 4])
    assert abs(build_random_uniform(400, seed=0).delta.mean()) < 0.01


def test_pair_decoding_matches_enumeration():
    n = 7
    pairs = list(itertools.combinations(range(n), 2))
    i, j = _pair_from_index(np.arange(len(pairs)), n)
    assert list(zip(i.tolist(), j.tolist())) == pairs


def test_er_laplacian_triangle():
    lap = build_er_laplacian(3, seed=0).toarray()
    assert np.array_equal(lap, [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_er_laplacian_properties(seed):
    n = 500
    lap = build_er_laplacian(n, seed)
    assert np.allclose(np.asarray(lap.sum(axis=1)).ravel(), 0)
    assert lap.nnz <= 3 * n
    assert (lap - lap.T).nnz == 0
    # exactly n edges
    assert -lap.toarray()[np.triu_indices(n, 1)].sum() == n


def test_oscillator_er_has_zero_diagonal_perturbation():
    p = build_oscillator_er(100, seed=4, lam=0.01)
    assert p.sparse
    assert not np.any(p.delta.diagonal())
    full = sp.diags(2.0 * np.arange(100) + 0.5) + 0.01 * build_er_laplacian(100, 4)
    assert np.allclose(p.matrix().toarray(), full.toarray())


def test_descriptor_round_trip():
    p = build_random_uniform(5, seed=9, lam=0.3 + 0.1j)
    q = from_descriptor(describe(p))
    assert np.array_equal(p.delta, q.delta)
    assert q.lam == p.lam
    with pytest.raises(ValueError):
        from_descriptor({"kind": "nope"})
