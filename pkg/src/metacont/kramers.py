"""Eyring-Kramers mean first-passage times for gradient systems.

For ``dx = -grad U(x) dt + sigma dW`` the mean time to leave the basin of a
minimum ``x*`` over an index-1 saddle ``z*`` is, to leading order,

    E[tau] = 2 pi / |lambda| * sqrt(|det H(z*)| / det H(x*)) * exp(2 (U(z*) - U(x*)) / sigma^2)

with ``H`` the Hessian of ``U`` and ``lambda`` the unstable growth rate at
the saddle.  The relative error is of order ``sigma |ln(sigma^2 / 2)|^{3/2}``
and is reported, not applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .linalg import lu_determinant, lu_factor, lu_solve
from .models import eval_jacobian

__all__ = [
    "lu_determinant",
    "RayleighResult",
    "KramersEstimate",
    "rayleigh_leading_eigen",
    "potential_hessian",
    "eyring_kramers_time",
    "kramers_along_branch",
]


@dataclass(frozen=True)
class RayleighResult:
    lam: float
    v: np.ndarray
    iterations: int
    residual: float
    fallback: bool = False


@dataclass(frozen=True)
class KramersEstimate:
    mu: float
    sigma: float
    x_star: np.ndarray
    z_star: np.ndarray
    barrier: float
    lambda_unstable: float
    det_saddle: float
    det_min: float
    prefactor: float
    expected_time: float
    correction_bound: float
    rayleigh_iters: int
    rayleigh_fallback: bool = False


def _assert_symmetric(A, tol=1e-10):
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.T).max() > tol * scale:
        raise PreconditionError("matrix is not symmetric; Rayleigh quotient iteration needs a symmetric matrix")


def rayleigh_leading_eigen(A, v0=None, lambda0=None, tol=1e-10, max_iter=50):
    """Rayleigh quotient iteration for a symmetric matrix.

    Iterates ``v <- (A - lam I)^{-1} v / |.|`` and ``lam <- v'Av`` until
    ``|A v - lam v| <= tol``.  The first shift is ``lambda0`` when given
    (otherwise the Rayleigh quotient of ``v0``), which selects the
    eigenpair nearest the warm start.  Without ``v0`` the eigenvector of the
    smallest eigenvalue from a full decomposition is used as the seed.

    An exactly singular shifted matrix means the shift is an eigenvalue; its
    LU pivots are floored so the solve still returns the eigenvector.  If
    ``max_iter`` is exceeded the full symmetric eigendecomposition is used
    and ``fallback`` is set.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _assert_symmetric(A)
    n = A.shape[0]
    if v0 is None:
        w, V = np.linalg.eigh(A)
        v0 = V[:, 0]
        if lambda0 is None:
            lambda0 = float(w[0])
    v = np.asarray(v0, dtype=float).copy()
    v /= np.linalg.norm(v)
    lam = float(v @ A @ v) if lambda0 is None else float(lambda0)
    scale = max(1.0, float(np.abs(A).max()))
    # residual of the starting pair with its Rayleigh quotient
    rq = float(v @ A @ v)
    res = float(np.linalg.norm(A @ v - rq * v))
    if res <= tol:
        return RayleighResult(rq, v, 0, res)
    for it in range(1, max_iter + 1):
        factors = lu_factor(A - lam * np.eye(n), pivot_floor=1e-300 * scale)
        y = lu_solve(factors, v)
        nrm = np.linalg.norm(y)
        if not np.isfinite(nrm) or nrm == 0.0:
            break
        v = y / nrm
        lam = float(v @ A @ v)
        res = float(np.linalg.norm(A @ v - lam * v))
        if res <= tol:
            return RayleighResult(lam, v, it, res)
    w, V = np.linalg.eigh(A)
    j = int(np.argmin(np.abs(w - lam)))
    v = V[:, j]
    return RayleighResult(float(w[j]), v, max_iter, float(np.linalg.norm(A @ v - w[j] * v)), True)


def potential_hessian(system, x, mu):
    """Hessian of ``U`` as minus the drift Jacobian, symmetrized after a check."""
    H = -eval_jacobian(system, x, mu)
    scale = max(1.0, float(np.abs(H).max()))
    # finite-difference Jacobians are only symmetric to about sqrt(eps)
    if np.abs(H - H.T).max() > 1e-6 * scale:
        raise PreconditionError(f"{system.name}: drift Jacobian is not symmetric; not a gradient system")
    return 0.5 * (H + H.T)


def eyring_kramers_time(system, x_star, z_star, mu, sigma, warm=None, tol=1e-10):
    """Leading-order Eyring-Kramers estimate of the mean exit time from ``x_star``.

    Parameters
    ----------
    system : SdeSystem
        Must carry a potential.
    x_star, z_star : array_like
        Local minimum and index-1 saddle of the potential.
    mu, sigma : float
    warm : RayleighResult, optional
        Previous saddle eigenpair for a warm-started Rayleigh iteration.

    Raises
    ------
    PreconditionError
        Missing potential, ``x_star`` not a minimum, or ``z_star`` without
        a single unstable eigendirection.
    """
    if system.potential is None:
        raise PreconditionError(f"{system.name} has no potential; Eyring-Kramers needs a gradient system")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    z_star = np.atleast_1d(np.asarray(z_star, dtype=float))
    Hx = potential_hessian(system, x_star, mu)
    Hz = potential_hessian(system, z_star, mu)
    wx = np.linalg.eigvalsh(Hx)
    wz = np.linalg.eigvalsh(Hz)
    if wx.min() <= 0:
        raise PreconditionError("x_star is not a strict local minimum (Hessian not positive definite)")
    if np.count_nonzero(wz < 0) != 1 or np.any(wz == 0):
        raise PreconditionError(
            "z_star must have a single unstable eigendirection "
            f"(Hessian eigenvalues {np.round(wz, 12).tolist()})"
        )
    if warm is not None:
        ray = rayleigh_leading_eigen(Hz, warm.v, warm.lam, tol=tol)
    else:
        ray = rayleigh_leading_eigen(Hz, tol=tol)
    lam = -ray.lam
    det_z = lu_determinant(Hz)
    det_x = lu_determinant(Hx)
    barrier = float(system.potential(z_star, mu) - system.potential(x_star, mu))
    prefactor = 2.0 * math.pi / abs(lam) * math.sqrt(abs(det_z) / det_x)
    expected = prefactor * math.exp(2.0 * barrier / sigma ** 2)
    bound = sigma * abs(math.log(sigma ** 2 / 2.0)) ** 1.5
    return KramersEstimate(
        mu=float(mu),
        sigma=float(sigma),
        x_star=x_star,
        z_star=z_star,
        barrier=barrier,
        lambda_unstable=float(lam),
        det_saddle=float(det_z),
        det_min=float(det_x),
        prefactor=float(prefactor),
        expected_time=float(expected),
        correction_bound=float(bound),
        rayleigh_iters=ray.iterations,
        rayleigh_fallback=ray.fallback,
    ), ray


def kramers_along_branch(system, min_points, saddle_points, sigma, pair_tol=None):
    """Eyring-Kramers estimates along paired minimum and saddle branches.

    ``min_points`` and ``saddle_points`` are sequences of objects with
    ``x_star`` and ``mu`` (e.g. branch points).  For every minimum the
    nearest saddle point in ``mu`` is refined by Newton's method at exactly
    the minimum's parameter value, so the two branches need not share a
    grid.  Each estimate warm-starts the saddle eigenpair from the previous
    one.

    Returns
    -------
    list of (mu, KramersEstimate or None, message)
    """
    from .continuation import newton_equilibrium
    from .ellipsoid import pair_by_mu

    mus_a = [p.mu for p in min_points]
    mus_b = [p.mu for p in saddle_points]
    if pair_tol is None:
        pair_tol = float(np.median(np.abs(np.diff(mus_a)))) if len(mus_a) > 1 else np.inf
    out = []
    warm = None
    for i, j in pair_by_mu(mus_a, mus_b, pair_tol):
        mu = float(mus_a[i])
        try:
            z = newton_equilibrium(system, saddle_points[j].x_star, mu)
            est, warm = eyring_kramers_time(system, min_points[i].x_star, z, mu, sigma, warm=warm)
        except (PreconditionError, ValueError, ArithmeticError) as exc:
            out.append((mu, None, str(exc)))
            warm = None
            continue
        out.append((mu, est, ""))
    return out
