import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_hurwitz, random_psd
from metacont.errors import CapacityError, ConvergenceError, PreconditionError
from metacont.lyapunov import (
    METHODS,
    bartels_stewart_solve,
    controllability_rank,
    covariance_along_branch,
    covariance_degeneracy,
    gauss_seidel_solve,
    kron_system,
    lyapunov_residual,
    smith_solve,
    solve_lyapunov,
)


def test_scalar_problem_all_methods():
    A, B = np.array([[-2.0]]), np.array([[1.0]])
    K, b = kron_system(A, B)
    assert K[0, 0] == -4.0 and b[0] == 1.0
    gs = gauss_seidel_solve(A, B, tol=1e-12)
    assert gs.C[0, 0] == 0.25 and gs.iterations <= 2
    assert smith_solve(A, B, q=0.1, tol=1e-12).C[0, 0] == pytest.approx(0.25, abs=1e-12)
    assert bartels_stewart_solve(A, B).C[0, 0] == pytest.approx(0.25, abs=1e-15)


def test_kron_of_diagonal_matrix():
    K, _ = kron_system(np.diag([-2.0, -1.0]), np.eye(2))
    assert np.array_equal(K, np.diag([-4.0, -3.0, -3.0, -2.0]))


def test_kron_reproduces_matrix_equation(rng):
    A = random_hurwitz(rng, 5)
    B, _ = random_psd(rng, 5)
    K, b = kron_system(A, B)
    C = bartels_stewart_solve(A, B).C
    assert np.linalg.norm(K @ C.flatten(order="F") + b) < 1e-10


def test_kron_capacity():
    with pytest.raises(CapacityError, match="smith or bartels-stewart"):
        kron_system(-np.eye(61), np.eye(61))


def test_diagonal_closed_form(rng):
    a = -rng.uniform(0.5, 3.0, 4)
    B, _ = random_psd(rng, 4)
    C = bartels_stewart_solve(np.diag(a), B).C
    assert np.allclose(C, -B / (a[:, None] + a[None, :]), atol=1e-14)


@pytest.mark.parametrize("method", METHODS)
def test_worked_degenerate_example(method):
    s = 0.3
    r = solve_lyapunov(np.diag([-2.0, -1.0]), np.diag([s * s, 0.0]), method, tol=1e-13)
    assert np.allclose(r.C, np.diag([s * s / 4, 0.0]), atol=1e-12)
    assert r.numerical_rank == 1
    assert np.array_equal(r.C, r.C.T)


def test_controllability_examples(rng):
    A = np.diag([-2.0, -1.0])
    assert controllability_rank(A, np.array([[0.3], [0.0]])) == 1
    M = random_hurwitz(rng, 4)
    assert controllability_rank(M, np.eye(4)) == 4
    assert controllability_rank(M, np.zeros((4, 2))) == 0


def test_degeneracy_examples():
    assert covariance_degeneracy(np.diag([0.0225, 0.0]))[0] == 1
    assert covariance_degeneracy(np.eye(3))[0] == 3
    assert covariance_degeneracy(np.zeros((2, 2)))[0] == 0


@settings(max_examples=40)
@given(st.integers(2, 12), st.integers(0, 2 ** 32 - 1))
def test_cross_solver_agreement_and_residual_contract(n, seed):
    rng = np.random.default_rng(seed)
    A = random_hurwitz(rng, n)
    B, _ = random_psd(rng, n)
    tol = 1e-9
    rs = [solve_lyapunov(A, B, m, tol=tol) for m in METHODS]
    for r in rs:
        assert r.residual <= 10 * tol * (1 + np.linalg.norm(B))
        assert r.residual == pytest.approx(lyapunov_residual(A, B, r.C), abs=1e-15)
        assert np.array_equal(r.C, r.C.T)
        assert np.linalg.eigvalsh(r.C).min() >= -1e-10 * max(1.0, np.abs(r.C).max())
    for i in range(3):
        for j in range(i):
            assert np.linalg.norm(rs[i].C - rs[j].C) <= 1e-7


@settings(max_examples=30)
@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
def test_controllability_iff_invertible(n, seed):
    rng = np.random.default_rng(seed)
    A = random_hurwitz(rng, n)
    k = int(rng.integers(1, n + 1))
    F = rng.normal(size=(n, k))
    if rng.random() < 0.5 and n > 2:
        # confine the noise to an invariant subspace of A -> not controllable
        w, V = np.linalg.eig(A)
        order = np.argsort(w.real)
        F = np.real(V[:, order[:1]]) if abs(w[order[0]].imag) < 1e-12 else F
    C = bartels_stewart_solve(A, F @ F.T).C
    full_con = controllability_rank(A, F) == n
    full_c = covariance_degeneracy(C)[0] == n
    assert full_con == full_c


def test_rejects_non_hurwitz_and_asymmetric_b():
    with pytest.raises(PreconditionError, match="Hurwitz"):
        gauss_seidel_solve(np.diag([1.0, -1.0]), np.eye(2))
    for m in METHODS:
        with pytest.raises(PreconditionError):
            solve_lyapunov(np.diag([0.0, -1.0]), np.eye(2), m)
    with pytest.raises(ValueError, match="symmetric"):
        bartels_stewart_solve(-np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="unknown"):
        solve_lyapunov(-np.eye(2), np.eye(2), "jacobi")


def test_gauss_seidel_structural_zero_and_budget():
    A = np.array([[0.0, 1.0], [-1.0, -1.0]])  # Hurwitz but A_11 + A_11 = 0
    with pytest.raises(PreconditionError, match="zero entry"):
        gauss_seidel_solve(A, np.eye(2))
    with pytest.raises(ConvergenceError) as info:
        gauss_seidel_solve(random_hurwitz(np.random.default_rng(0), 6), np.eye(6), tol=1e-14,
                           max_iter=3)
    assert info.value.iterations == 3


def test_warm_start_is_used():
    A = np.array([[-1.0, 0.8], [-0.3, -2.0]])
    B = np.eye(2)
    exact = bartels_stewart_solve(A, B).C
    cold = gauss_seidel_solve(A, B, tol=1e-10)
    warm = gauss_seidel_solve(A, B, C_init=exact + 1e-8, tol=1e-10)
    assert warm.iterations < cold.iterations


def test_along_branch_falls_back_and_records_failures():
    good = np.array([[-1.0, 0.3], [0.1, -2.0]])
    zero_diag = np.array([[0.0, 1.0], [-1.0, -1.0]])
    unstable = np.diag([1.0, -1.0])
    res, fails = covariance_along_branch([good, zero_diag, unstable, good], [np.eye(2)] * 4)
    assert [r.method if r else None for r in res] == [
        "bartels-stewart", "bartels-stewart", None, "bartels-stewart"]
    assert [i for i, _ in fails] == [2]
    res, fails = covariance_along_branch([good, zero_diag], [np.eye(2)] * 2, fallback=False)
    assert res[1] is None and fails[0][0] == 1
