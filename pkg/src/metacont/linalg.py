"""Dense eigenvalue and factorization kernels.

Hessenberg reduction and the Francis double-shift QR iteration produce the
real Schur form used by the Bartels-Stewart solver and by the stability
classification along continuation branches.  A small partially pivoted LU
supplies determinants and the shifted solves of Rayleigh quotient iteration.
"""
from __future__ import annotations

import numpy as np

from .errors import NumericalFailure

__all__ = [
    "hessenberg",
    "real_schur",
    "schur_blocks",
    "eigenvalues_dense",
    "lu_factor",
    "lu_solve",
    "lu_determinant",
]

_EPS = np.finfo(float).eps


def _householder(x):
    """Return ``(v, beta)`` with ``(I - beta v v^T) x = -+||x|| e_1`` and ``v[0] = 1``."""
    x = np.asarray(x, dtype=float)
    sigma = float(x[1:] @ x[1:])
    v = x.copy()
    v[0] = 1.0
    if sigma == 0.0:
        return v, 0.0
    alpha = x[0]
    mu = np.sqrt(alpha * alpha + sigma)
    # numerically stable choice of the reflected component
    v0 = alpha - mu if alpha <= 0 else -sigma / (alpha + mu)
    beta = 2.0 * v0 * v0 / (sigma + v0 * v0)
    v[1:] = x[1:] / v0
    return v, beta


def hessenberg(A, calc_q=True):
    """Reduce ``A`` to upper Hessenberg form by Householder similarity.

    Returns ``(H, Q)`` with ``Q^T A Q = H``; ``Q`` is ``None`` when
    ``calc_q`` is false.
    """
    H = np.array(A, dtype=float, copy=True)
    n = H.shape[0]
    Q = np.eye(n) if calc_q else None
    for k in range(n - 2):
        v, beta = _householder(H[k + 1:, k])
        if beta == 0.0:
            continue
        H[k + 1:, k:] -= beta * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= beta * np.outer(H[:, k + 1:] @ v, v)
        if calc_q:
            Q[:, k + 1:] -= beta * np.outer(Q[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H, Q


def _split_real_block(H, U, p):
    """Triangularize the 2x2 block at rows/cols ``p, p+1`` if its eigenvalues are real.

    Returns True when the block was split.
    """
    a, b = H[p, p], H[p, p + 1]
    c, d = H[p + 1, p], H[p + 1, p + 1]
    half = 0.5 * (a - d)
    disc = half * half + b * c
    if disc < 0.0:
        return False
    root = np.sqrt(disc)
    lam = 0.5 * (a + d) + (root if half >= 0 else -root)
    # eigenvector of the block for lam; pick the better conditioned formula
    e1 = np.array([b, lam - a])
    e2 = np.array([lam - d, c])
    e = e1 if np.hypot(*e1) >= np.hypot(*e2) else e2
    nrm = np.hypot(*e)
    if nrm == 0.0:
        H[p + 1, p] = 0.0
        return True
    cs, sn = e / nrm
    G = np.array([[cs, -sn], [sn, cs]])
    H[p:p + 2, p:] = G.T @ H[p:p + 2, p:]
    H[:p + 2, p:p + 2] = H[:p + 2, p:p + 2] @ G
    if U is not None:
        U[:, p:p + 2] = U[:, p:p + 2] @ G
    H[p + 1, p] = 0.0
    return True


def real_schur(A, calc_u=True, max_iter_factor=30):
    """Real Schur decomposition ``U^T A U = R`` by Francis double-shift QR.

    ``R`` is upper quasi-triangular: 1x1 diagonal blocks carry real
    eigenvalues and 2x2 blocks carry complex-conjugate pairs (blocks with a
    real spectrum are split by a Givens rotation).

    Parameters
    ----------
    A : (n, n) array_like
        Real square matrix with finite entries.
    calc_u : bool
        Accumulate the orthogonal factor.
    max_iter_factor : int
        QR sweeps allowed per unit of dimension before giving up.

    Returns
    -------
    R, U : ndarray
        ``U`` is ``None`` when ``calc_u`` is false.

    Raises
    ------
    NumericalFailure
        If the iteration does not deflate within ``max_iter_factor * n``
        sweeps.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericalFailure("matrix has non-finite entries")
    n = A.shape[0]
    H, U = hessenberg(A, calc_q=calc_u)
    if n == 1:
        return H, U
    anorm = np.abs(H).sum()
    budget = max_iter_factor * n
    total = 0
    its = 0
    hi = n - 1
    while hi >= 0:
        if hi == 0:
            break
        # locate the active unreduced block [l, hi]
        l = hi
        while l > 0:
            s = abs(H[l - 1, l - 1]) + abs(H[l, l])
            if s == 0.0:
                s = anorm
            if abs(H[l, l - 1]) <= _EPS * s:
                H[l, l - 1] = 0.0
                break
            l -= 1
        if l == hi:
            hi -= 1
            its = 0
            continue
        if l == hi - 1:
            _split_real_block(H, U, hi - 1)
            hi -= 2
            its = 0
            continue

        if total >= budget:
            raise NumericalFailure(
                f"QR iteration failed to converge after {total} sweeps (n={n})"
            )
        total += 1
        its += 1
        if its % 10 == 0:
            # exceptional shift breaks cycling
            x = abs(H[hi, hi - 1]) + abs(H[hi - 1, hi - 2])
            a = H[hi, hi] + 0.75 * x
            s = 2.0 * a
            t = a * a + 0.4375 * x * x
        else:
            s = H[hi - 1, hi - 1] + H[hi, hi]
            t = H[hi - 1, hi - 1] * H[hi, hi] - H[hi - 1, hi] * H[hi, hi - 1]

        x = H[l, l] * H[l, l] + H[l, l + 1] * H[l + 1, l] - s * H[l, l] + t
        y = H[l + 1, l] * (H[l, l] + H[l + 1, l + 1] - s)
        z = H[l + 1, l] * H[l + 2, l + 1]
        for k in range(l, hi - 1):
            v, beta = _householder(np.array([x, y, z]))
            if beta != 0.0:
                r = max(l, k - 1)
                H[k:k + 3, r:] -= beta * np.outer(v, v @ H[k:k + 3, r:])
                top = min(k + 4, hi + 1)
                H[:top, k:k + 3] -= beta * np.outer(H[:top, k:k + 3] @ v, v)
                if calc_u:
                    U[:, k:k + 3] -= beta * np.outer(U[:, k:k + 3] @ v, v)
            x = H[k + 1, k]
            y = H[k + 2, k]
            if k < hi - 2:
                z = H[k + 3, k]
        v, beta = _householder(np.array([x, y]))
        if beta != 0.0:
            H[hi - 1:hi + 1, hi - 2:] -= beta * np.outer(v, v @ H[hi - 1:hi + 1, hi - 2:])
            H[:hi + 1, hi - 1:hi + 1] -= beta * np.outer(H[:hi + 1, hi - 1:hi + 1] @ v, v)
            if calc_u:
                U[:, hi - 1:hi + 1] -= beta * np.outer(U[:, hi - 1:hi + 1] @ v, v)
    # clean below the quasi-triangular structure
    return np.triu(H, -1), U


def schur_blocks(R):
    """Return the ``(start, size)`` pairs of the diagonal blocks of a quasi-triangular ``R``."""
    n = R.shape[0]
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and R[i + 1, i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return blocks


def _block_eigenvalues(R):
    vals = []
    for i, size in schur_blocks(R):
        if size == 1:
            vals.append(complex(R[i, i]))
        else:
            a, b, c, d = R[i, i], R[i, i + 1], R[i + 1, i], R[i + 1, i + 1]
            half = 0.5 * (a - d)
            disc = half * half + b * c
            mid = 0.5 * (a + d)
            if disc >= 0.0:
                root = np.sqrt(disc)
                vals += [complex(mid + root), complex(mid - root)]
            else:
                im = np.sqrt(-disc)
                vals += [complex(mid, im), complex(mid, -im)]
    return np.array(vals, dtype=complex)


def eigenvalues_dense(A):
    """Eigenvalues of a real square matrix, sorted by descending real part.

    Ties in the real part are broken by descending imaginary part, so a
    complex-conjugate pair appears as ``(a + bi, a - bi)``.

    >>> eigenvalues_dense([[0.0, -1.0], [1.0, 0.0]])
    array([0.+1.j, 0.-1.j])
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    R, _ = real_schur(A, calc_u=False)
    vals = _block_eigenvalues(R)
    order = np.lexsort((-vals.imag, -vals.real))
    return vals[order]


def lu_factor(A, pivot_floor=0.0):
    """Partially pivoted LU of a square matrix, stored compactly.

    Returns ``(LU, perm, sign)`` where ``A[perm] = L @ U``, ``L`` is the
    unit lower triangle of ``LU`` and ``sign`` the permutation parity. A
    pivot whose magnitude is below ``pivot_floor`` is replaced by
    ``pivot_floor`` (with its sign) so that the factorization of an exactly
    singular matrix remains usable for shift-invert solves.
    """
    LU = np.array(A, dtype=float, copy=True)
    n = LU.shape[0]
    perm = np.arange(n)
    sign = 1.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(LU[k:, k])))
        if p != k:
            LU[[k, p]] = LU[[p, k]]
            perm[[k, p]] = perm[[p, k]]
            sign = -sign
        piv = LU[k, k]
        if abs(piv) < pivot_floor:
            piv = pivot_floor if piv >= 0 else -pivot_floor
            LU[k, k] = piv
        if piv == 0.0:
            continue
        LU[k + 1:, k] /= piv
        LU[k + 1:, k + 1:] -= np.outer(LU[k + 1:, k], LU[k, k + 1:])
    return LU, perm, sign


def lu_solve(factors, b):
    """Solve ``A x = b`` from the output of :func:`lu_factor`."""
    LU, perm, _ = factors
    n = LU.shape[0]
    y = np.asarray(b, dtype=float)[perm].copy()
    for i in range(1, n):
        y[i] -= LU[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - LU[i, i + 1:] @ y[i + 1:]) / LU[i, i]
    return y


def lu_determinant(A, underflow=1e-300):
    """Determinant as the signed product of the LU pivots.

    Returns exactly ``0.0`` when any pivot has magnitude below ``underflow``.

    >>> lu_determinant(np.diag([2.0, 3.0, 4.0]))
    24.0
    """
    LU, _, sign = lu_factor(A)
    d = np.diag(LU)
    if np.any(np.abs(d) < underflow):
        return 0.0
    return float(sign * np.prod(d))
