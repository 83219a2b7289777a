import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynspec.polynomial import (
    durand_kerner,
    eigenvalues_via_charpoly,
    faddeev_leverrier,
    match_multisets,
    polyval,
)


def test_faddeev_leverrier_matches_numpy_poly():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    assert np.allclose(faddeev_leverrier(a), np.poly(a))


def test_durand_kerner_known_roots():
    roots = durand_kerner([1, -6, 11, -6])
    assert match_multisets(roots, [1, 2, 3]) < 1e-12


def test_durand_kerner_zero_roots_split_off():
    roots = durand_kerner([1, -1, 0, 0])
    assert match_multisets(roots, [0, 0, 1]) < 1e-14


def test_durand_kerner_linear_and_constant():
    assert np.allclose(durand_kerner([2, -4]), [2])
    assert durand_kerner([3]).size == 0
    with pytest.raises(ValueError):
        durand_kerner([0, 0])


def test_durand_kerner_double_root_accepted_at_rounding_level():
    roots = durand_kerner([1, -2, 1])
    assert np.all(np.abs(roots - 1) < 1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False), min_size=1, max_size=6))
def test_durand_kerner_residuals_small(roots):
    coeffs = np.poly(roots)
    found = durand_kerner(coeffs)
    scale = polyval(np.abs(coeffs), np.abs(found)).real
    assert np.all(np.abs(polyval(coeffs, found)) <= 1e-8 * np.maximum(scale, 1.0))


def test_charpoly_eigenvalues_match_lapack():
    rng = np.random.default_rng(7)
    for n in range(1, 7):
        a = rng.normal(size=(n, n))
        assert match_multisets(eigenvalues_via_charpoly(a), np.linalg.eigvals(a)) < 1e-9


def test_match_multisets_pairs_optimally():
    assert match_multisets([1, 2], [2.1, 0.9]) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        match_multisets([1], [1, 2])
