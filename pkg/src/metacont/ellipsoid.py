"""Confidence ellipsoids and the support-function distance between them.

For ellipsoids ``E_i = {x_i + Q_i^{1/2} u : |u| <= 1}`` the signed distance

    delta = max_{|v| = 1}  v.x1 - sqrt(v'Q1 v) - v.x2 - sqrt(v'Q2 v)

is positive when the sets are disjoint (a separating hyperplane exists with
normal ``v``), zero when they touch and negative when they overlap.  It is
computed by sequential quadratic programming on

    min G(v)   subject to   g(v) = |v|^2 - 1 = 0,

with ``G(v) = -v.x1 + sqrt(v'Q1 v) + v.x2 + sqrt(v'Q2 v)`` and
``delta = -min G``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lyapunov import RANK_TOL, covariance_degeneracy

__all__ = [
    "Ellipsoid",
    "DistanceResult",
    "SqpState",
    "support_function",
    "objective",
    "objective_gradient",
    "objective_hessian",
    "sqp_iteration",
    "distance",
    "distance_along_branch",
    "pair_by_mu",
]

_NULL_TOL = 1e-12
_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class Ellipsoid:
    """Solid ellipsoid ``{x : v.x <= v.center + sqrt(v'Qv) for all v}``.

    The support-function definition admits singular ``Q`` (flat ellipsoids,
    segments and points).
    """

    center: np.ndarray
    shape: np.ndarray
    h: float = 1.0
    rank: int = -1

    def __post_init__(self):
        c = np.atleast_1d(np.array(self.center, dtype=float))
        Q = np.atleast_2d(np.array(self.shape, dtype=float))
        if Q.shape != (c.size, c.size):
            raise ValueError(f"shape matrix must be {c.size}x{c.size}, got {Q.shape}")
        scale = max(1.0, float(np.abs(Q).max()))
        if np.abs(Q - Q.T).max() > 1e-10 * scale:
            raise ValueError("shape matrix must be symmetric")
        Q = 0.5 * (Q + Q.T)
        if np.linalg.eigvalsh(Q).min() < -1e-10 * scale:
            raise ValueError("shape matrix must be positive semidefinite")
        c.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", Q)
        if self.rank < 0:
            object.__setattr__(self, "rank", covariance_degeneracy(Q)[0])

    @classmethod
    def from_covariance(cls, center, C, h):
        """The neighbourhood ``B(h)`` with shape ``Q = h^2 C``."""
        if not h > 0:
            raise ValueError("h must be positive")
        C = np.atleast_2d(np.asarray(C, dtype=float))
        return cls(center, h * h * C, h)

    @property
    def dim(self):
        return self.center.size

    def semi_axes(self):
        """Semi-axis lengths ``sqrt(eig(Q))``, descending."""
        w = np.clip(np.linalg.eigvalsh(self.shape), 0.0, None)
        return np.sqrt(w)[::-1]

    @property
    def major_semi_axis(self):
        return float(self.semi_axes()[0])

    def half_width(self, v):
        """Half the width of the ellipsoid along direction ``v``."""
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(max(v @ self.shape @ v, 0.0)) / np.linalg.norm(v))

    def boundary(self, n_points=64):
        """Closed-curve samples ``center + V sqrt(L) (cos t, sin t)`` for 2-D ellipsoids."""
        if self.dim != 2:
            raise ValueError("boundary polylines are defined for 2-D ellipsoids")
        w, V = np.linalg.eigh(self.shape)
        L = V * np.sqrt(np.clip(w, 0.0, None))
        t = 2.0 * np.pi * np.arange(n_points) / n_points
        return self.center + (L @ np.vstack([np.cos(t), np.sin(t)])).T


def support_function(E, v):
    """``sigma_E(v) = v.center + sqrt(v'Qv)``; ``v'Qv`` is clamped at 0."""
    v = np.asarray(v, dtype=float)
    return float(v @ E.center + np.sqrt(max(float(v @ E.shape @ v), 0.0)))


@dataclass(frozen=True)
class DistanceResult:
    delta: float
    v_star: np.ndarray
    iterations: int
    function_evals: int
    converged: bool
    kkt_residual: float
    message: str = ""


def _sqrt_term(Q, v):
    q = float(v @ Q @ v)
    return np.sqrt(q) if q > 0.0 else 0.0


def objective(v, x1, Q1, x2, Q2):
    """``G(v) = -v.x1 + sqrt(v'Q1 v) + v.x2 + sqrt(v'Q2 v)``."""
    v = np.asarray(v, dtype=float)
    return float(v @ (x2 - x1) + _sqrt_term(Q1, v) + _sqrt_term(Q2, v))


def objective_gradient(v, x1, Q1, x2, Q2):
    """Explicit gradient; a vanishing ``sqrt`` term contributes the subgradient 0."""
    v = np.asarray(v, dtype=float)
    grad = x2 - x1
    for Q in (Q1, Q2):
        s = _sqrt_term(Q, v)
        if s > 0.0:
            grad = grad + (Q @ v) / s
    return grad


def objective_hessian(v, x1, Q1, x2, Q2):
    """Explicit Hessian: ``sum_i Q_i / s_i - (Q_i v)(Q_i v)^T / s_i^3``, ``s_i = sqrt(v'Q_i v)``."""
    v = np.asarray(v, dtype=float)
    H = np.zeros((v.size, v.size))
    for Q in (Q1, Q2):
        s = _sqrt_term(Q, v)
        if s > 0.0:
            Qv = Q @ v
            H += Q / s - np.outer(Qv, Qv) / s ** 3
    return H


@dataclass(frozen=True)
class SqpState:
    """Iterate of the SQP method for the distance problem.

    ``u`` is the Lagrange multiplier of the constraint ``g`` and ``rho`` the
    current penalty of the merit function ``G + rho |g|``.
    """

    v: np.ndarray
    u: float
    rho: float
    x1: np.ndarray
    Q1: np.ndarray
    x2: np.ndarray
    Q2: np.ndarray
    iteration: int = 0
    function_evals: int = 0
    step_norm: float = np.inf
    kkt_residual: float = np.inf
    failed: bool = False

    def G(self, v=None):
        return objective(self.v if v is None else v, self.x1, self.Q1, self.x2, self.Q2)


def _kkt_solve(H, a, rhs, tau0=1e-8):
    n = H.shape[0]
    tau = 0.0
    for _ in range(60):
        K = np.zeros((n + 1, n + 1))
        K[:n, :n] = H + tau * np.eye(n)
        K[:n, n] = -a
        K[n, :n] = a
        try:
            if np.linalg.cond(K) < 1e14:
                return np.linalg.solve(K, rhs), tau
        except np.linalg.LinAlgError:
            pass
        tau = tau0 if tau == 0.0 else 2.0 * tau
    return None, tau


def _convexify(H, a, grad):
    """Shift ``H`` so that it is positive definite on the tangent space ``a^perp``.

    An indefinite tangent block is lifted to curvature at least
    ``max(|lambda_min|, ||P grad||)`` so the tangent step stays of order one
    (a crude trust region); a definite block is left alone.
    """
    n = H.shape[0]
    if n == 1:
        return H
    # orthonormal basis of the tangent space from the complete QR of a
    Qf, _ = np.linalg.qr(a.reshape(-1, 1), mode="complete")
    Z = Qf[:, 1:]
    lo = float(np.linalg.eigvalsh(Z.T @ H @ Z).min())
    scale = max(1.0, float(np.abs(H).max()))
    floor = 1e-8 * scale
    if lo < floor:
        target = max(floor, float(np.linalg.norm(Z.T @ grad)))
        H = H + (target - lo) * np.eye(n)
    return H


def sqp_iteration(state, tol=1e-8):
    """One SQP step with an l1-merit backtracking line search.

    Solves the KKT system ``[[H, -grad g], [grad g^T, 0]] [w; u] =
    [-grad G; -g]`` for the step ``w`` and the new multiplier ``u``, with
    ``H`` the Hessian of the Lagrangian ``G - u g`` (shifted to be positive
    definite on the constraint tangent space, and regularized with ``tau I``
    if the KKT matrix is singular).
    """
    v = state.v
    x1, Q1, x2, Q2 = state.x1, state.Q1, state.x2, state.Q2
    grad = objective_gradient(v, x1, Q1, x2, Q2)
    g = float(v @ v - 1.0)
    a = 2.0 * v
    # least-squares multiplier at the current point (the previous one lags after long steps)
    u_ls = float(grad @ a) / float(a @ a)
    H = objective_hessian(v, x1, Q1, x2, Q2) - 2.0 * u_ls * np.eye(v.size)
    H = _convexify(H, a, grad)
    sol, _ = _kkt_solve(H, a, np.append(-grad, -g))
    if sol is None:
        return dataclasses.replace(state, failed=True)
    w, u_new = sol[:-1], float(sol[-1])
    kkt = float(np.linalg.norm(grad - u_new * a))
    wn = float(np.linalg.norm(w))
    rho = max(state.rho, abs(u_new) + 1.0)
    nfev = state.function_evals
    G0 = objective(v, x1, Q1, x2, Q2)
    nfev += 1
    phi0 = G0 + rho * abs(g)
    slope = float(grad @ w) - rho * abs(g)
    alpha = 1.0
    v_new = v
    accepted = False
    while alpha >= 1e-12:
        trial = v + alpha * w
        # second-order correction: the radial pullback onto the sphere
        for cand in (trial / np.linalg.norm(trial), trial):
            Gt = objective(cand, x1, Q1, x2, Q2)
            nfev += 1
            phi = Gt + rho * abs(float(cand @ cand - 1.0))
            # slack at rounding level so the last Newton steps are not rejected
            if phi <= phi0 + 1e-4 * alpha * min(slope, 0.0) + 4.0 * _EPS * (1.0 + abs(phi0)):
                v_new = cand
                accepted = True
                break
        if accepted:
            break
        alpha *= 0.5
    return dataclasses.replace(
        state,
        v=v_new,
        u=u_new,
        rho=rho,
        iteration=state.iteration + 1,
        function_evals=nfev,
        step_norm=wn,
        kkt_residual=kkt,
        failed=not accepted and wn > tol,
    )


def _cold_start(x1, Q1, x2, Q2):
    d = x1 - x2
    nrm = np.linalg.norm(d)
    if nrm > 0:
        return d / nrm
    # equal centers: direction of least combined extent
    w, V = np.linalg.eigh(Q1 + Q2)
    return V[:, 0]


def _solve_sqp(x1, Q1, x2, Q2, v0, tol, max_iter):
    v0 = np.asarray(v0, dtype=float)
    v0 = v0 / np.linalg.norm(v0)
    # least-squares multiplier from stationarity grad G = 2 u v
    u0 = 0.5 * float(objective_gradient(v0, x1, Q1, x2, Q2) @ v0)
    state = SqpState(v0, u0, abs(u0) + 1.0, x1, Q1, x2, Q2)
    converged = False
    best_G, stall = np.inf, 0
    while state.iteration < max_iter:
        v = state.v
        state = sqp_iteration(state, tol)
        if state.failed:
            break
        g = abs(float(v @ v - 1.0))
        gscale = 1.0 + float(np.linalg.norm(objective_gradient(v, x1, Q1, x2, Q2)))
        if state.step_norm <= tol and g <= tol and state.kkt_residual <= tol * gscale:
            converged = True
            state = dataclasses.replace(state, v=v)
            break
        # stalled at a nonsmooth point: no progress on the normalized objective
        vn = state.v / np.linalg.norm(state.v)
        Gn = objective(vn, x1, Q1, x2, Q2)
        if Gn < best_G - 1e-14 * (1.0 + abs(Gn)):
            best_G, stall = Gn, 0
        else:
            stall += 1
            if stall >= 15:
                break
    return state, converged


def _from_state(state, converged, x1, Q1, x2, Q2, message=""):
    v = state.v / np.linalg.norm(state.v)
    v.setflags(write=False)
    delta = -objective(v, x1, Q1, x2, Q2)
    return DistanceResult(delta, v, state.iteration, state.function_evals + 1, converged,
                          float(state.kkt_residual), message)


def _null_basis(Q):
    w, V = np.linalg.eigh(Q)
    top = max(float(np.abs(w).max()), 0.0)
    if top == 0.0:
        return None
    mask = w <= _NULL_TOL * top
    if not mask.any():
        return None
    return V[:, mask]


def _one_dim(x1, Q1, x2, Q2):
    best = None
    for s in (1.0, -1.0):
        v = np.array([s])
        d = -objective(v, x1, Q1, x2, Q2)
        if best is None or d > best[0]:
            best = (d, v)
    return best


def distance(E1, E2, v_init=None, tol=1e-8, max_iter=200, multistart=0, rng=None):
    """Signed support-function distance ``delta`` between two ellipsoids.

    Parameters
    ----------
    E1, E2 : Ellipsoid
    v_init : array_like, optional
        Warm start; defaults to the normalized center difference.
    tol : float
        Tolerance on the step, the constraint and the KKT residual.
    max_iter : int
        SQP iteration budget; when exhausted the result is returned with
        ``converged=False``.
    multistart : int
        Extra random starting directions (opt-in global check); the best
        local maximizer is returned.
    rng : numpy.random.Generator, optional
        Source of the multistart directions.

    Notes
    -----
    When a shape matrix is singular the maximizer may sit on a kink of
    ``G`` (a direction in its null space).  The reduced problem restricted
    to that null space, where the offending term vanishes identically, is
    solved as well and the larger value is kept.
    """
    x1, Q1, x2, Q2 = E1.center, E1.shape, E2.center, E2.shape
    n = x1.size
    if x2.size != n:
        raise ValueError("ellipsoids must have equal dimension")
    if not np.any(Q1) and not np.any(Q2) and np.array_equal(x1, x2):
        v = np.zeros(n)
        v[0] = 1.0
        v.setflags(write=False)
        return DistanceResult(0.0, v, 0, 0, True, 0.0)
    if n == 1:
        d, v = _one_dim(x1, Q1, x2, Q2)
        v.setflags(write=False)
        return DistanceResult(float(d), v, 0, 2, True, 0.0)

    starts = [np.asarray(v_init, dtype=float) if v_init is not None else _cold_start(x1, Q1, x2, Q2)]
    if multistart:
        rng = rng if rng is not None else np.random.default_rng(0)
        starts += list(rng.normal(size=(multistart, n)))
    best = None
    evals = 0
    for v0 in starts:
        state, ok = _solve_sqp(x1, Q1, x2, Q2, v0, tol, max_iter)
        res = _from_state(state, ok, x1, Q1, x2, Q2)
        evals += res.function_evals
        if best is None or (res.converged, res.delta) > (best.converged, best.delta):
            best = res

    # kink candidates in null spaces of singular shape matrices
    for Q in (Q1, Q2):
        N = _null_basis(Q)
        if N is None:
            continue
        z0 = N.T @ best.v_star
        if np.linalg.norm(z0) < 1e-8:
            z0 = N.T @ _cold_start(x1, Q1, x2, Q2)
        rx1, rx2 = N.T @ x1, N.T @ x2
        rQ1, rQ2 = N.T @ Q1 @ N, N.T @ Q2 @ N
        rQ1, rQ2 = 0.5 * (rQ1 + rQ1.T), 0.5 * (rQ2 + rQ2.T)
        if N.shape[1] == 1:
            d, z = _one_dim(rx1, rQ1, rx2, rQ2)
            ok = True
            evals += 2
        else:
            if np.linalg.norm(z0) < 1e-8:
                z0 = np.eye(N.shape[1])[0]
            state, ok = _solve_sqp(rx1, rQ1, rx2, rQ2, z0, tol, max_iter)
            z = state.v / np.linalg.norm(state.v)
            evals += state.function_evals
        v = N @ z
        v = v / np.linalg.norm(v)
        d = -objective(v, x1, Q1, x2, Q2)
        close = d >= best.delta - tol * (1.0 + abs(d))
        if ok and (d > best.delta or (close and not best.converged)):
            v.setflags(write=False)
            best = DistanceResult(d, v, best.iterations, evals, True, 0.0,
                                  "maximizer on a degenerate direction")
    return dataclasses.replace(best, function_evals=evals)


def pair_by_mu(mus_a, mus_b, tol):
    """Index pairs ``(i, j)`` matching each ``mus_a[i]`` to the nearest ``mus_b[j]`` within ``tol``."""
    mus_b = np.asarray(mus_b, dtype=float)
    pairs = []
    if mus_b.size == 0:
        return pairs
    for i, m in enumerate(np.asarray(mus_a, dtype=float)):
        j = int(np.argmin(np.abs(mus_b - m)))
        if abs(mus_b[j] - m) <= tol:
            pairs.append((i, j))
    return pairs


def distance_along_branch(ellipsoids_a, ellipsoids_b, mus_a, mus_b, tol=1e-8, pair_tol=None,
                          every_k=1, warm=True, max_iter=200):
    """Distances between two families of ellipsoids paired by parameter value.

    Parameters
    ----------
    ellipsoids_a, ellipsoids_b : sequence of Ellipsoid or None
        Neighbourhoods along two branches; ``None`` marks points without an
        ellipsoid (e.g. unstable equilibria) and is skipped.
    mus_a, mus_b : sequence of float
        Parameter values of the entries.
    pair_tol : float, optional
        Maximum parameter mismatch of a pair; defaults to the median spacing
        of ``mus_a``.
    every_k : int
        Evaluate at every ``k``-th pair only.
    warm : bool
        Start each solve from the previous maximizer.

    Returns
    -------
    list of (mu, DistanceResult or None, message)
        ``mu`` is taken from branch A.  Failed points are recorded with
        ``None`` and a message, they do not stop the sweep.
    """
    if every_k < 1:
        raise ValueError("every_k must be >= 1")
    mus_a = np.asarray(mus_a, dtype=float)
    if pair_tol is None:
        pair_tol = float(np.median(np.abs(np.diff(mus_a)))) if mus_a.size > 1 else np.inf
    valid_b = [j for j, e in enumerate(ellipsoids_b) if e is not None]
    mb = np.asarray(mus_b, dtype=float)[valid_b]
    out = []
    v_prev: Optional[np.ndarray] = None
    count = 0
    for i, j in pair_by_mu(mus_a, mb, pair_tol):
        Ea = ellipsoids_a[i]
        if Ea is None:
            continue
        count += 1
        if (count - 1) % every_k:
            continue
        Eb = ellipsoids_b[valid_b[j]]
        try:
            res = distance(Ea, Eb, v_init=v_prev if warm else None, tol=tol, max_iter=max_iter)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            out.append((float(mus_a[i]), None, str(exc)))
            continue
        out.append((float(mus_a[i]), res, "" if res.converged else "not converged"))
        if res.converged:
            v_prev = np.array(res.v_star)
    return out
