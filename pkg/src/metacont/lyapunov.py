"""Stationary covariance from the Lyapunov equation ``A C + C A^T + B = 0``.

Three interchangeable solvers are provided:

* :func:`gauss_seidel_solve` -- Gauss-Seidel on the Kronecker form
  ``(I (x) A + A (x) I) vec(C) = -vec(B)``, swept matrix-free over the
  entries of ``C``; accepts a warm start.
* :func:`smith_solve` -- Smith's squared iteration after a Cayley transform
  with shift ``q``.
* :func:`bartels_stewart_solve` -- direct solve via the real Schur form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CapacityError, ConvergenceError, NumericalFailure, PreconditionError
from .linalg import eigenvalues_dense, real_schur, schur_blocks

__all__ = [
    "CovarianceResult",
    "METHODS",
    "hurwitz_precheck",
    "kron_system",
    "gauss_seidel_solve",
    "smith_solve",
    "bartels_stewart_solve",
    "solve_lyapunov",
    "controllability_rank",
    "covariance_degeneracy",
    "lyapunov_residual",
    "covariance_along_branch",
]

METHODS = ("gauss-seidel", "smith", "bartels-stewart")
RANK_TOL = 1e-10
KRON_CAP = 60


@dataclass(frozen=True)
class CovarianceResult:
    """Solution of one Lyapunov problem.

    ``iterations`` counts Gauss-Seidel sweeps or Smith squarings and is 0
    for the direct solver.
    """

    C: np.ndarray
    residual: float
    iterations: int
    method: str
    singular_values: np.ndarray
    numerical_rank: int


def lyapunov_residual(A, B, C):
    """Frobenius norm of ``A C + C A^T + B``."""
    return float(np.linalg.norm(A @ C + C @ A.T + B))


def hurwitz_precheck(A):
    """Raise PreconditionError unless every eigenvalue of ``A`` has negative real part."""
    top = float(np.real(eigenvalues_dense(A)).max())
    if not top < 0.0:
        raise PreconditionError(
            f"A is not Hurwitz (max real eigenvalue {top:.3e}); no stationary covariance"
        )


def _check(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] != A.shape[1] or B.shape != A.shape:
        raise ValueError(f"A and B must be square of equal size, got {A.shape} and {B.shape}")
    scale = max(1.0, float(np.abs(B).max()))
    if np.abs(B - B.T).max() > 1e-12 * scale:
        raise ValueError("B must be symmetric")
    return A, B


def kron_system(A, B, kron_cap=KRON_CAP):
    """Dense Kronecker form ``(I (x) A + A (x) I, vec(B))`` with column-major ``vec``.

    ``K @ vec(C) = -vec(B)`` is equivalent to the matrix equation.
    """
    A, B = _check(A, B)
    n = A.shape[0]
    if n > kron_cap:
        raise CapacityError(
            f"n={n} exceeds kron_cap={kron_cap}; use smith or bartels-stewart instead"
        )
    I = np.eye(n)
    return np.kron(I, A) + np.kron(A, I), B.flatten(order="F")


def covariance_degeneracy(C, rank_tol=RANK_TOL):
    """Numerical rank and singular values of a symmetric ``C``.

    Singular values come from the symmetric eigendecomposition (absolute
    eigenvalues), sorted in descending order.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    sv = np.sort(np.abs(np.linalg.eigvalsh(0.5 * (C + C.T))))[::-1]
    if sv[0] == 0.0:
        return 0, sv
    return int(np.count_nonzero(sv > rank_tol * sv[0])), sv


def controllability_rank(A, F_sigma, rank_tol=RANK_TOL):
    """Numerical rank of ``[F, A F, ..., A^{n-1} F]``.

    ``A`` is scaled to unit 2-norm and every block to unit norm before the
    SVD; positive column scalings leave the rank unchanged but keep the
    Krylov blocks comparable in size.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    F = np.atleast_2d(np.asarray(F_sigma, dtype=float))
    n = A.shape[0]
    anorm = np.linalg.norm(A, 2)
    As = A / anorm if anorm > 0 else A
    blocks = []
    X = F.copy()
    for _ in range(n):
        nrm = np.linalg.norm(X)
        blocks.append(X / nrm if nrm > 0 else X)
        X = As @ X
    s = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def _result(A, B, C, iterations, method, rank_tol):
    C = 0.5 * (C + C.T)
    rank, sv = covariance_degeneracy(C, rank_tol)
    C.setflags(write=False)
    sv.setflags(write=False)
    return CovarianceResult(C, lyapunov_residual(A, B, C), iterations, method, sv, rank)


@njit(cache=True)
def _gs_sweeps(A, B, C, tol, max_iter):
    # Entry (i, j) of the sweep is row i + j n of the Kronecker system; its
    # equation is sum_k A_ik C_kj + sum_k C_ik A_jk = -B_ij. Updating C in
    # place in column-major order is exactly one Gauss-Seidel sweep.
    n = A.shape[0]
    inc = np.inf
    for it in range(1, max_iter + 1):
        acc = 0.0
        for j in range(n):
            for i in range(n):
                s = -B[i, j]
                for k in range(n):
                    if k != i:
                        s -= A[i, k] * C[k, j]
                    if k != j:
                        s -= C[i, k] * A[j, k]
                new = s / (A[i, i] + A[j, j])
                d = new - C[i, j]
                acc += d * d
                C[i, j] = new
        inc = np.sqrt(acc)
        if not np.isfinite(inc) or inc > 1e150:
            return -it, inc
        if inc < tol:
            return it, inc
    return -(max_iter + 1), inc


def gauss_seidel_solve(A, B, C_init=None, tol=1e-9, max_iter=10000, rank_tol=RANK_TOL,
                       precheck=True):
    """Gauss-Seidel iteration on the Kronecker form of the Lyapunov equation.

    Parameters
    ----------
    A, B : (n, n) array_like
    C_init : (n, n) array_like, optional
        Warm start. Defaults to ``C_ij = -B_ij / (A_ii + A_jj)``, which is
        exact for diagonal ``A``.
    tol : float
        Stop when the Frobenius norm of the sweep increment is below ``tol``.
    max_iter : int
        Sweep budget.

    Raises
    ------
    PreconditionError
        Zero diagonal entry ``A_ii + A_jj`` of the Kronecker matrix, or
        ``A`` not Hurwitz.
    ConvergenceError
        Budget exhausted or iterates diverged.
    """
    A, B = _check(A, B)
    if precheck:
        hurwitz_precheck(A)
    d = np.diag(A)
    D = d[:, None] + d[None, :]
    if np.any(D == 0.0):
        raise PreconditionError("Kronecker diagonal has a zero entry A_ii + A_jj = 0")
    if C_init is None:
        C = -B / D
    else:
        C = np.array(C_init, dtype=float, copy=True)
        if C.shape != A.shape:
            raise ValueError("C_init has the wrong shape")
    code, inc = _gs_sweeps(np.ascontiguousarray(A), np.ascontiguousarray(B), C, tol, max_iter)
    if code < 0:
        what = "diverged" if -code <= max_iter else f"did not converge in {max_iter} sweeps"
        raise ConvergenceError(
            f"Gauss-Seidel {what} (last increment {inc:.3e})",
            residual=float(inc),
            iterations=min(-code, max_iter),
        )
    return _result(A, B, C, int(code), "gauss-seidel", rank_tol)


def smith_solve(A, B, q=0.1, tol=1e-9, max_iter=60, rank_tol=RANK_TOL, precheck=True):
    """Smith's squared iteration.

    With ``K = 2q (qI - A)^{-1} B (qI - A)^{-T}`` and the Cayley transform
    ``G = (qI - A)^{-1} (qI + A)``, iterate
    ``C_{k+1} = C_k + G_k C_k G_k^T`` with ``G_{k+1} = G_k^2``, starting from
    ``C_0 = K`` and ``G_0 = G``. No initial guess is used.

    Raises
    ------
    ConvergenceError
        Spectral radius of ``G`` at least 1, or ``max_iter`` squarings
        without the increment falling below ``tol``.
    """
    A, B = _check(A, B)
    if not q > 0:
        raise ValueError("q must be positive")
    if precheck:
        hurwitz_precheck(A)
    n = A.shape[0]
    M = q * np.eye(n) - A
    try:
        X = np.linalg.solve(M, B)
        K = 2.0 * q * np.linalg.solve(M, X.T).T
        G = np.linalg.solve(M, q * np.eye(n) + A)
    except np.linalg.LinAlgError:
        raise NumericalFailure("qI - A is singular") from None
    radius = float(np.abs(eigenvalues_dense(G)).max())
    if radius >= 1.0:
        raise ConvergenceError(f"Smith iteration diverges: spectral radius of G is {radius:.6f}")
    C = K
    for k in range(1, max_iter + 1):
        inc = G @ C @ G.T
        C = C + inc
        G = G @ G
        step = float(np.linalg.norm(inc))
        if step < tol:
            return _result(A, B, C, k, "smith", rank_tol)
    raise ConvergenceError(
        f"Smith iteration did not converge in {max_iter} squarings (last increment {step:.3e})",
        residual=step,
        iterations=max_iter,
    )


def bartels_stewart_solve(A, B, rank_tol=RANK_TOL, precheck=True):
    """Direct solve through the real Schur form ``U^T A U = R``.

    The transformed equation ``R Y + Y R^T = W`` with ``W = -U^T B U`` is
    solved by back-substitution over the 1x1 / 2x2 diagonal blocks of
    ``R``; then ``C = U Y U^T``.
    """
    A, B = _check(A, B)
    if precheck:
        hurwitz_precheck(A)
    R, U = real_schur(A)
    W = -U.T @ B @ U
    n = A.shape[0]
    Y = np.zeros((n, n))
    blocks = schur_blocks(R)
    for k0, ks in reversed(blocks):
        k1 = k0 + ks
        Rkk = R[k0:k1, k0:k1]
        for l0, ls in reversed(blocks):
            l1 = l0 + ls
            rhs = W[k0:k1, l0:l1] - R[k0:k1, k1:] @ Y[k1:, l0:l1] - Y[k0:k1, l1:] @ R[l0:l1, l1:].T
            Rll = R[l0:l1, l0:l1]
            # R_kk Y + Y R_ll^T = rhs as a (ks * ls) Kronecker system
            K = np.kron(np.eye(ls), Rkk) + np.kron(Rll, np.eye(ks))
            y = np.linalg.solve(K, rhs.flatten(order="F"))
            Y[k0:k1, l0:l1] = y.reshape((ks, ls), order="F")
    C = U @ Y @ U.T
    return _result(A, B, C, 0, "bartels-stewart", rank_tol)


def solve_lyapunov(A, B, method="bartels-stewart", tol=1e-9, C_init=None, **kw):
    """Dispatch to one of :data:`METHODS`."""
    if method == "gauss-seidel":
        return gauss_seidel_solve(A, B, C_init=C_init, tol=tol, **kw)
    if method == "smith":
        return smith_solve(A, B, tol=tol, **kw)
    if method == "bartels-stewart":
        return bartels_stewart_solve(A, B, **kw)
    raise ValueError(f"unknown Lyapunov method {method!r}; choose from {METHODS}")


def covariance_along_branch(A_list, B_list, method="gauss-seidel", tol=1e-9, warm=True,
                            init_direct=True, fallback=True, rank_tol=RANK_TOL):
    """Solve a sequence of Lyapunov problems along a branch.

    The first problem is solved directly when ``init_direct`` (the usual
    initialization); later Gauss-Seidel solves start from the previous
    solution when ``warm``.  A point whose iterative solve fails or is not
    applicable (zero diagonal entry of the Kronecker matrix) falls back to
    Bartels-Stewart when ``fallback``; a point that cannot be solved at all
    (e.g. not Hurwitz) yields ``None``.

    Returns
    -------
    results : list of CovarianceResult or None
    failures : list of (index, message)
    """
    results, failures = [], []
    prev = None
    for i, (A, B) in enumerate(zip(A_list, B_list)):
        try:
            if method == "gauss-seidel" and init_direct and prev is None:
                res = bartels_stewart_solve(A, B, rank_tol=rank_tol)
            elif method == "gauss-seidel":
                res = gauss_seidel_solve(A, B, C_init=prev if warm else None, tol=tol,
                                         rank_tol=rank_tol)
            else:
                res = solve_lyapunov(A, B, method, tol=tol, rank_tol=rank_tol)
        except (PreconditionError, ConvergenceError, NumericalFailure) as exc:
            # an iterative method that is inapplicable (zero Kronecker
            # diagonal) or stalls falls back to the direct solver; a
            # non-Hurwitz A fails there as well and is recorded
            if not fallback or method == "bartels-stewart":
                results.append(None)
                failures.append((i, str(exc)))
                prev = None
                continue
            try:
                res = bartels_stewart_solve(A, B, rank_tol=rank_tol)
            except PreconditionError as exc2:
                results.append(None)
                failures.append((i, str(exc2)))
                prev = None
                continue
        results.append(res)
        prev = res.C
    return results, failures
