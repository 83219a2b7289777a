import numpy as np
import pytest
import scipy.sparse as sp

from dynspec.baselines import matmul_time, median_time, power_iteration, rayleigh_quotient_iteration


def test_power_iteration_dominant():
    m = np.diag([1.0, 2.0, 5.0]) + 0.01
    est = power_iteration(m)
    assert est.converged
    assert est.eigenvalue.real == pytest.approx(np.max(np.linalg.eigvalsh(m)), abs=1e-10)


def test_shift_invert_finds_nearest():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(40, 40))
    m = sp.csr_matrix(np.diag(np.arange(40.0)) + 0.01 * (a + a.T))
    ref = np.linalg.eigvalsh(m.toarray())
    est = power_iteration(m, shift=20.3)
    target = ref[np.argmin(np.abs(ref - 20.3))]
    assert est.eigenvalue.real == pytest.approx(target, abs=1e-10)
    assert est.residual < 1e-8


def test_rqi_converges_cubically_close():
    m = np.diag([1.0, 3.0, 7.0]) + 0.1 * np.ones((3, 3))
    est = rayleigh_quotient_iteration(m, np.array([0, 0.1, 1.0]))
    assert est.converged and est.iterations <= 6
    assert np.min(np.abs(np.linalg.eigvalsh(m) - est.eigenvalue.real)) < 1e-12


def test_timers_positive():
    assert median_time(lambda: sum(range(100)), reps=3) >= 0
    assert matmul_time(np.eye(8)) >= 0
    assert matmul_time(sp.identity(8, format="csr")) >= 0


def test_krylov_inner_solver_matches_lu():
    rng = np.random.default_rng(1)
    a = sp.random(200, 200, density=0.02, random_state=3, format="csr")
    m = sp.diags(2.0 * np.arange(200) + 0.5) + 0.01 * (a + a.T)
    lu = power_iteration(m, shift=399.0)
    kr = power_iteration(m, shift=399.0, inner="krylov")
    assert lu.converged and kr.converged
    assert abs(lu.eigenvalue - kr.eigenvalue) < 1e-10
    with pytest.raises(ValueError):
        power_iteration(m, shift=1.0, inner="qr")
