import numpy as np
import pytest
from hypothesis import given, strategies as st

from metacont.linalg import (
    eigenvalues_dense,
    hessenberg,
    lu_determinant,
    lu_factor,
    lu_solve,
    real_schur,
    schur_blocks,
)


def _sorted(ev):
    return np.array(sorted(ev, key=lambda z: (round(z.real, 8), round(z.imag, 8))))


@given(st.integers(1, 12), st.integers(0, 2 ** 32 - 1))
def test_hessenberg_is_similarity(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    H, Q = hessenberg(A)
    assert np.allclose(np.tril(H, -2), 0.0)
    assert np.allclose(Q @ H @ Q.T, A, atol=1e-10)
    assert np.allclose(Q.T @ Q, np.eye(n), atol=1e-12)


@given(st.integers(1, 15), st.integers(0, 2 ** 32 - 1))
def test_real_schur_reconstructs(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    T, U = real_schur(A)
    assert np.allclose(U @ T @ U.T, A, atol=1e-9 * max(1, np.abs(A).max()))
    assert np.allclose(U.T @ U, np.eye(n), atol=1e-11)
    for i, size in schur_blocks(T):
        assert size in (1, 2)
    # quasi-triangular: nothing below the block diagonal
    mask = np.tril(np.ones((n, n)), -2).astype(bool)
    assert np.allclose(T[mask], 0.0)


@given(st.integers(1, 15), st.integers(0, 2 ** 32 - 1))
def test_eigenvalues_match_numpy(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    ours = _sorted(eigenvalues_dense(A))
    ref = _sorted(np.linalg.eigvals(A))
    assert np.allclose(ours, ref, atol=1e-8)


def test_eigenvalues_of_rotation_block():
    ev = eigenvalues_dense(np.array([[0.0, -2.0], [2.0, 0.0]]))
    assert np.allclose(sorted(ev.imag), [-2.0, 2.0])
    assert np.allclose(ev.real, 0.0)


@given(st.integers(1, 10), st.integers(0, 2 ** 32 - 1))
def test_lu_solve_and_determinant(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + n * np.eye(n)
    b = rng.normal(size=n)
    x = lu_solve(lu_factor(A), b)
    assert np.allclose(A @ x, b, atol=1e-10)
    assert lu_determinant(A) == pytest.approx(np.linalg.det(A), rel=1e-10)


def test_determinant_of_singular_matrix_is_zero():
    assert lu_determinant(np.array([[1.0, 2.0], [2.0, 4.0]])) == pytest.approx(0.0, abs=1e-14)
