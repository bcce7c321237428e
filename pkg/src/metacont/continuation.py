"""Equilibrium continuation with stability and bifurcation test functions.

Branches are followed in ``(x, mu)`` space by pseudo-arclength continuation:
a tangent predictor followed by a Newton corrector constrained to the
hyperplane orthogonal to the tangent.  This passes through folds without
special treatment.  Every accepted point records the Jacobian, its spectrum
and a stability label.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, SingularJacobianError
from .linalg import eigenvalues_dense
from .models import SdeSystem, eval_dmu, eval_drift, eval_jacobian

__all__ = [
    "BranchPoint",
    "Branch",
    "Event",
    "ContinuationOptions",
    "classify_stability",
    "newton_equilibrium",
    "find_equilibria",
    "continue_branch",
    "detect_events",
    "fold_test",
    "hopf_test",
]

MARGINAL_BAND = 1e-8


def classify_stability(eigenvalues, band=MARGINAL_BAND):
    """Label a spectrum as ``stable``, ``marginal``, ``saddle`` or ``unstable``."""
    re = np.real(eigenvalues)
    top = re.max()
    if top < -band:
        return "stable"
    if abs(top) <= band:
        return "marginal"
    return "saddle" if re.min() < -band else "unstable"


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BranchPoint:
    """One accepted equilibrium on a branch."""

    x_star: np.ndarray
    mu: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    stability: str
    tangent: np.ndarray
    residual: float = 0.0

    @property
    def max_re_eig(self):
        return float(np.real(self.eigenvalues).max())

    @property
    def y(self):
        return np.append(self.x_star, self.mu)


@dataclass(frozen=True)
class Event:
    """A bifurcation located between points ``index`` and ``index + 1``."""

    index: int
    kind: str
    mu: float
    x: np.ndarray
    test_value: float


@dataclass
class Branch:
    points: list
    events: list = field(default_factory=list)
    closed: bool = False
    termination: str = "max-steps"
    step: float = float("nan")
    system: Optional[SdeSystem] = field(default=None, repr=False, compare=False)
    name: str = ""

    def __len__(self):
        return len(self.points)

    @property
    def mus(self):
        return np.array([p.mu for p in self.points])

    @property
    def states(self):
        return np.array([p.x_star for p in self.points])

    def stable_runs(self, label="stable"):
        """Index runs of consecutive points with the given stability label.

        On a closed branch a run crossing the start/end seam is joined, so
        the returned runs are contiguous in the cyclic order.
        """
        flags = [p.stability == label for p in self.points]
        runs, cur = [], []
        for i, ok in enumerate(flags):
            if ok:
                cur.append(i)
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        if self.closed and len(runs) > 1 and flags[0] and flags[-1]:
            runs[0] = runs.pop() + runs[0]
        return runs


@dataclass(frozen=True)
class ContinuationOptions:
    """Step control and termination settings for :func:`continue_branch`.

    ``direction`` selects the initial sign of ``d mu / ds``. Fixed steps are
    the default; ``adaptive=True`` halves on corrector failure and doubles
    after easy steps within ``[min_step, 10 * step]``.

    With ``stop_at_degenerate`` the branch ends where ``mu`` reverses
    direction while ``det A`` keeps its sign (a degenerate turn such as a
    symmetric pitchfork point, as opposed to a fold).
    """

    direction: int = 1
    newton_tol: float = 1e-10
    max_newton: int = 15
    min_step: Optional[float] = None
    adaptive: bool = False
    mu_min: float = -np.inf
    mu_max: float = np.inf
    detect_loop: bool = True
    stop_at_degenerate: bool = True
    detect: bool = True
    marginal_band: float = MARGINAL_BAND
    event_tol: float = 1e-6


def newton_equilibrium(system, x0, mu, tol=1e-10, max_iter=50):
    """Newton's method for ``f(x; mu) = 0`` at fixed ``mu``.

    Raises
    ------
    SingularJacobianError
        If the Jacobian is numerically singular at an iterate.
    ConvergenceError
        If ``max_iter`` iterations do not bring ``||f||`` below ``tol``.
    """
    x = np.atleast_1d(np.array(x0, dtype=float))
    f = eval_drift(system, x, mu)
    res = float(np.linalg.norm(f))
    for it in range(max_iter + 1):
        if res <= tol:
            return x
        if it == max_iter:
            break
        A = eval_jacobian(system, x, mu)
        if np.linalg.cond(A) > 1e14:
            raise SingularJacobianError(
                f"singular Jacobian at x={x.tolist()}", residual=res, iterations=it
            )
        x = x - np.linalg.solve(A, f)
        f = eval_drift(system, x, mu)
        res = float(np.linalg.norm(f))
    raise ConvergenceError(
        f"Newton did not converge in {max_iter} iterations (residual {res:.3e})",
        residual=res,
        iterations=max_iter,
    )


def find_equilibria(system, mu, grid, tol=1e-10, max_iter=50, dedup=1e-7):
    """Multi-start Newton from every start in ``grid``; returns unique roots."""
    roots = []
    for x0 in grid:
        try:
            x = newton_equilibrium(system, x0, mu, tol=tol, max_iter=max_iter)
        except (ConvergenceError, DomainError):
            continue
        if not any(np.linalg.norm(x - r) < dedup for r in roots):
            roots.append(x)
    return roots


def _bordered(system, x, mu, t):
    A = eval_jacobian(system, x, mu)
    fm = eval_dmu(system, x, mu)
    n = x.size
    M = np.empty((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n] = fm
    M[n] = t
    return M, A


def _tangent(M, t_prev):
    rhs = np.zeros(M.shape[0])
    rhs[-1] = 1.0
    M = M.copy()
    M[-1] = t_prev
    t = np.linalg.solve(M, rhs)
    return t / np.linalg.norm(t)


def _initial_tangent(system, x, mu, direction):
    A = eval_jacobian(system, x, mu)
    fm = eval_dmu(system, x, mu)
    D = np.hstack([A, fm[:, None]])
    _, s, Vt = np.linalg.svd(D)
    t = Vt[-1]
    if t[-1] * direction < 0 or (t[-1] == 0 and direction < 0):
        t = -t
    return t / np.linalg.norm(t)


def _point(system, x, mu, t, band, residual):
    A = eval_jacobian(system, x, mu)
    ev = eigenvalues_dense(A)
    return BranchPoint(
        x_star=_frozen(x),
        mu=float(mu),
        jacobian=_frozen(A),
        eigenvalues=_frozen(ev),
        stability=classify_stability(ev, band),
        tangent=_frozen(t),
        residual=float(residual),
    )


def _correct(system, y_pred, t, tol, max_newton):
    """Newton corrector on ``f(y) = 0, t . (y - y_pred) = 0``."""
    n = y_pred.size - 1
    y = y_pred.copy()
    for _ in range(max_newton):
        x, mu = y[:n], y[n]
        f = eval_drift(system, x, mu)
        M, _ = _bordered(system, x, mu, t)
        rhs = np.append(-f, -(t @ (y - y_pred)))
        try:
            dy = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            raise SingularJacobianError("singular bordered Jacobian") from None
        y = y + dy
        if not np.all(np.isfinite(y)):
            raise ConvergenceError("corrector diverged")
        res = float(np.linalg.norm(eval_drift(system, y[:n], y[n])))
        if res <= tol and np.linalg.norm(dy) <= 1e-8 * (1.0 + np.linalg.norm(y)):
            return y, res
    raise ConvergenceError("corrector did not converge", residual=res)


def continue_branch(system, seed, step, n_steps, opts=None):
    """Follow the equilibrium branch through ``seed = (x0, mu0)``.

    Parameters
    ----------
    system : SdeSystem
    seed : tuple
        Approximate equilibrium ``x0`` and parameter ``mu0``; ``x0`` is
        refined by Newton first.
    step : float
        Arclength step in ``(x, mu)`` space.
    n_steps : int
        Maximum number of continuation steps.
    opts : ContinuationOptions, optional

    Returns
    -------
    Branch
        ``termination`` is one of ``max-steps``, ``closed``, ``domain``,
        ``degenerate`` or ``corrector-failure``. Events are detected when ``opts.detect``.
    """
    opts = opts or ContinuationOptions()
    if step <= 0:
        raise ValueError("step must be positive")
    min_step = opts.min_step if opts.min_step is not None else step / 2 ** 10
    max_step = 10.0 * step
    x0, mu0 = seed
    mu0 = float(mu0)
    x = newton_equilibrium(system, x0, mu0, tol=opts.newton_tol)
    t = _initial_tangent(system, x, mu0, opts.direction)
    res0 = float(np.linalg.norm(eval_drift(system, x, mu0)))
    points = [_point(system, x, mu0, t, opts.marginal_band, res0)]
    y0 = np.append(x, mu0)
    y = y0.copy()
    n = x.size
    h = step
    farthest = 0.0
    branch = Branch(points=points, step=step, system=system)
    termination = "max-steps"
    for _ in range(n_steps):
        while True:
            y_pred = y + h * t
            try:
                y_new, res = _correct(system, y_pred, t, opts.newton_tol, opts.max_newton)
                M, _ = _bordered(system, y_new[:n], y_new[n], t)
                t_new = _tangent(M, t)
                # reject jumps onto a different branch
                ok = abs(np.linalg.norm(y_new - y) - h) < 0.5 * h and t_new @ t > 0.5
            except (ConvergenceError, DomainError, np.linalg.LinAlgError):
                ok = False
            if ok:
                break
            h *= 0.5
            if h < min_step:
                termination = "corrector-failure"
                break
        if termination == "corrector-failure":
            break
        if not (opts.mu_min <= y_new[n] <= opts.mu_max):
            termination = "domain"
            break
        if system.nonnegative and np.any(y_new[:n] < 0):
            termination = "domain"
            break
        new = _point(system, y_new[:n], y_new[n], t_new, opts.marginal_band, res)
        prev = points[-1]
        if (opts.stop_at_degenerate and t[-1] * t_new[-1] < 0
                and fold_test(prev) * fold_test(new) > 0):
            termination = "degenerate"
            break
        y, t = y_new, t_new
        points.append(new)
        if opts.adaptive:
            h = min(2.0 * h, max_step)
        else:
            h = step
        dist = float(np.linalg.norm(y - y0))
        farthest = max(farthest, dist)
        if opts.detect_loop and farthest > 4 * step and dist < step and len(points) > 8:
            branch.closed = True
            termination = "closed"
            break
    branch.termination = termination
    if opts.detect and len(points) >= 2:
        branch.events = detect_events(branch, tol=opts.event_tol)
    return branch


def fold_test(point):
    """Fold test function ``det A``."""
    return float(np.real(np.prod(point.eigenvalues)))


def hopf_test(point):
    """Sum-of-pairs test function ``prod_{i<j} (lambda_i + lambda_j)``.

    Vanishes when two eigenvalues sum to zero: a Hopf point for a
    complex-conjugate pair, a neutral saddle for a real pair.
    """
    ev = point.eigenvalues
    n = ev.size
    val = 1.0 + 0j
    for i in range(n):
        for j in range(i + 1, n):
            val *= ev[i] + ev[j]
    return float(val.real)


def _resolve(system, p, s, tol, band):
    y_pred = p.y + s * p.tangent
    y, res = _correct(system, y_pred, p.tangent, tol, 30)
    n = p.x_star.size
    return _point(system, y[:n], y[n], p.tangent, band, res)


def _refine(system, p, q, test, tol):
    """Root of ``test`` between ``p`` and ``q`` in arclength from ``p``."""
    h = float(np.linalg.norm(q.y - p.y))
    fa, fb = test(p), test(q)
    cache = {}

    def phi(s):
        if s == 0.0:
            return fa
        pt = _resolve(system, p, s, 1e-13, 0.0)
        cache[s] = pt
        return test(pt)

    try:
        s = brentq(phi, 0.0, h, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        pt = cache.get(s) or _resolve(system, p, s, 1e-13, 0.0)
        return pt, test(pt)
    except (ValueError, ConvergenceError, DomainError, np.linalg.LinAlgError):
        w = fa / (fa - fb)
        mu = (1 - w) * p.mu + w * q.mu
        x = (1 - w) * p.x_star + w * q.x_star
        return BranchPoint(x, mu, p.jacobian, p.eigenvalues, "marginal", p.tangent), 0.0


def _pair_kind(point, scale):
    ev = point.eigenvalues
    best, kind = np.inf, "neutral-saddle-suspect"
    for i in range(ev.size):
        for j in range(i + 1, ev.size):
            gap = abs(ev[i] + ev[j])
            if gap < best:
                best = gap
                conj = abs(ev[i] - np.conj(ev[j])) <= 1e-8 * scale
                complex_pair = conj and abs(ev[i].imag) > 1e-8 * scale
                kind = "hopf" if complex_pair else "neutral-saddle-suspect"
    return kind


def detect_events(branch, tol=1e-6):
    """Locate folds, branch points and Hopf points along ``branch``.

    A sign change of ``det A`` is a ``fold`` when the parameter direction
    reverses across it and a ``branch-point`` otherwise.  A sign change of
    :func:`hopf_test` is ``hopf`` when the eigenvalues summing to zero form a
    complex pair with nonzero imaginary part, else
    ``neutral-saddle-suspect``.  Locations are refined by root finding in
    arclength on re-solved points.
    """
    system = branch.system
    pts = branch.points
    events = []
    if len(pts) < 2:
        return events
    n = pts[0].x_star.size
    for i in range(len(pts) - 1):
        p, q = pts[i], pts[i + 1]
        fp, fq = fold_test(p), fold_test(q)
        if fp == 0.0 or fp * fq < 0:
            if system is not None:
                pt, val = _refine(system, p, q, fold_test, tol)
            else:
                pt, val = q, fq
            turned = p.tangent[-1] * q.tangent[-1] < 0
            kind = "fold" if turned else "branch-point"
            events.append(Event(i, kind, pt.mu, _frozen(pt.x_star), val))
        if n >= 2:
            hp, hq = hopf_test(p), hopf_test(q)
            if hp == 0.0 or hp * hq < 0:
                if system is not None:
                    pt, val = _refine(system, p, q, hopf_test, tol)
                else:
                    pt, val = q, hq
                scale = max(1.0, float(np.abs(pt.eigenvalues).max()))
                events.append(Event(i, _pair_kind(pt, scale), pt.mu, _frozen(pt.x_star), val))
    return events
