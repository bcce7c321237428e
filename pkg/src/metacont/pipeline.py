"""Run orchestration: continuation, covariances, distances, simulation, Kramers.

Every stage records per-point failures instead of aborting, so a run ends
with status 0 (everything succeeded) or 2 (partial results).  Configuration
problems raise :class:`~metacont.errors.ConfigError` before anything is
computed or written.
"""
from __future__ import annotations

import dataclasses
import itertools
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .continuation import (
    Branch,
    BranchPoint,
    ContinuationOptions,
    classify_stability,
    continue_branch,
    detect_events,
    find_equilibria,
    newton_equilibrium,
)
from .ellipsoid import Ellipsoid, distance_along_branch
from .errors import ConfigError, MetacontError, PreconditionError
from .kramers import kramers_along_branch
from .linalg import eigenvalues_dense
from .lyapunov import covariance_along_branch
from .models import eval_jacobian, get_model, noise_covariance, with_constant_noise, NoiseSpec
from .sdesim import SimulationConfig, euler_maruyama, simulate_passages

__all__ = [
    "STAGES",
    "BranchResult",
    "PipelineResult",
    "build_system",
    "trace_branches",
    "branch_covariances",
    "branch_distances",
    "run_simulation",
    "run_kramers",
    "run_pipeline",
    "read_branches",
    "benchmark_solvers",
    "benchmark_distance",
    "BENCH_TOLS",
]

STAGES = ("continue", "covariance", "distance", "simulate", "kramers")
BENCH_TOLS = tuple(10.0 ** -k for k in range(2, 13))


@dataclass
class BranchResult:
    """A branch with its per-point covariances and ellipsoids.

    ``order`` lists the stable point indices in sweep order (stable runs
    concatenated; a run crossing the seam of a closed branch is contiguous).
    """

    name: str
    branch: Branch
    covariances: list = field(default_factory=list)
    ellipsoids: list = field(default_factory=list)
    order: list = field(default_factory=list)


@dataclass
class PipelineResult:
    status: int = 0
    files: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    branches: dict = field(default_factory=dict)
    distances: dict = field(default_factory=dict)
    passages: list = field(default_factory=list)
    kramers: dict = field(default_factory=dict)


# ----------------------------------------------------------------------------
# model


def build_system(cfg):
    """Instantiate the configured model, applying a constant-noise override."""
    m = cfg.model
    try:
        if m.builtin is not None:
            system = get_model(m.builtin, **m.params)
        else:
            from .expressions import expression_system

            e = m.expression
            system = expression_system(e.name, e.state, e.parameter, e.drift, e.params,
                                       e.diffusion, e.noise_cov, e.potential, e.nonnegative)
        nz = cfg.noise
        if nz.shape is not None:
            system = with_constant_noise(system, shape=nz.shape)
        elif nz.factor is not None:
            system = with_constant_noise(system, F=nz.factor)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from None
    return system


def _validate_against(cfg, system):
    n = system.dim_state
    for b in cfg.branches or ():
        if len(b.x0) != n:
            raise ConfigError(f"branches.{b.name}.x0 needs {n} components")
    if cfg.seed_grid is not None and not (len(cfg.seed_grid.lower) == len(cfg.seed_grid.upper) == n):
        raise ConfigError(f"seed_grid bounds need {n} components")
    if cfg.kramers is not None and not system.is_gradient:
        raise ConfigError(f"kramers: {system.name} is not a gradient system (no potential)")
    names = {b.name for b in cfg.branches} if cfg.branches else None
    if names is not None:
        refs = list(itertools.chain.from_iterable(cfg.distance.pairs or []))
        if cfg.simulate is not None and cfg.simulate.pair is not None:
            refs += list(cfg.simulate.pair)
        if cfg.kramers is not None:
            refs += list(cfg.kramers.min_branches or [])
            refs += [cfg.kramers.saddle_branch] if cfg.kramers.saddle_branch else []
        unknown = sorted(set(refs) - names)
        if unknown:
            raise ConfigError(f"unknown branch names referenced: {unknown}")


# ----------------------------------------------------------------------------
# A1: continuation


def _continue(system, cfg, x0, mu, direction):
    p = cfg.parameter

    def run(d):
        opts = ContinuationOptions(direction=d, newton_tol=p.newton_tol, adaptive=p.adaptive,
                                   mu_min=p.min, mu_max=p.max, detect=False)
        return continue_branch(system, (x0, mu), p.step, p.n_steps, opts)

    if direction == "up":
        br = run(1)
    elif direction == "down":
        br = run(-1)
    else:
        br = run(1)
        if not br.closed:
            down = run(-1)
            # reversed half keeps a consistent tangent orientation
            back = [dataclasses.replace(q, tangent=-q.tangent) for q in reversed(down.points[1:])]
            br = Branch(points=back + br.points, step=p.step, system=system,
                        termination=f"{down.termination}/{br.termination}")
    br.events = detect_events(br)
    return br


def _on_branch(x, mu, branch, radius):
    y = np.append(x, mu)
    return any(np.linalg.norm(q.y - y) < radius for q in branch.points)


def trace_branches(cfg, system):
    """Continue every configured seed (or every root found on the seed grid).

    Returns
    -------
    branches : dict name -> Branch
    failures : list of str
    """
    mu0 = cfg.parameter.start
    branches, failures = {}, []
    if cfg.branches is not None:
        seeds = [(b.name, np.asarray(b.x0, float), mu0 if b.mu is None else b.mu, b.direction)
                 for b in cfg.branches]
    else:
        g = cfg.seed_grid
        axes = [np.linspace(lo, hi, g.points) for lo, hi in zip(g.lower, g.upper)]
        grid = [np.array(c) for c in itertools.product(*axes)]
        roots = find_equilibria(system, mu0, grid, tol=cfg.parameter.newton_tol)
        roots.sort(key=lambda r: tuple(np.round(r, 12)))
        seeds = [(None, r, mu0, "both") for r in roots]
    for name, x0, mu, direction in seeds:
        if name is None:
            if any(_on_branch(x0, mu, b, 2 * cfg.parameter.step) for b in branches.values()):
                continue
            name = f"branch{len(branches) + 1}"
        try:
            br = _continue(system, cfg, x0, mu, direction)
        except MetacontError as exc:
            failures.append(f"branch {name}: {exc}")
            continue
        br.name = name
        if "corrector-failure" in br.termination:
            failures.append(f"branch {name}: continuation stopped early (corrector failure)")
        branches[name] = br
    return branches, failures


def read_branches(directory, system, names=None):
    """Rebuild branches from ``branch_<name>.csv`` files (for post-processing).

    Jacobians and eigenvalues are recomputed at the stored states; tangents
    are not stored and are set to NaN.
    """
    directory = Path(directory)
    closed = {}
    summary = directory / "summary.json"
    if summary.exists():
        import json

        closed = {b["name"]: b["closed"] for b in json.loads(summary.read_text()).get("branches", [])}
    files = sorted(directory.glob("branch_*.csv"))
    out = {}
    n = system.dim_state
    for f in files:
        name = f.stem[len("branch_"):]
        if names is not None and name not in names:
            continue
        pts = []
        for row in io.read_table(f):
            x = np.array([float(row[f"x_{i + 1}"]) for i in range(n)])
            mu = float(row["mu"])
            A = eval_jacobian(system, x, mu)
            ev = eigenvalues_dense(A)
            pts.append(BranchPoint(x_star=x, mu=mu, jacobian=A, eigenvalues=ev,
                                   stability=classify_stability(ev),
                                   tangent=np.full(n + 1, np.nan)))
        out[name] = Branch(points=pts, closed=bool(closed.get(name, False)), termination="read",
                           system=system, name=name)
    if not out:
        raise ConfigError(f"no branch files found in {directory}")
    return out


# ----------------------------------------------------------------------------
# A2: covariances and ellipsoids


def branch_covariances(cfg, system, branch, method=None, tol=None, warm=None):
    """Warm-started Lyapunov solves along each stable run of ``branch``."""
    s = cfg.solver
    method = method or s.method
    tol = s.tol if tol is None else tol
    warm = s.warm if warm is None else warm
    sig2 = cfg.noise.sigma ** 2
    n = len(branch.points)
    res = BranchResult(branch.name, branch, [None] * n, [None] * n, [])
    failures = []
    for run in branch.stable_runs():
        pts = [branch.points[i] for i in run]
        A_list = [p.jacobian for p in pts]
        B_list = [sig2 * noise_covariance(system, p.x_star, p.mu) for p in pts]
        results, fails = covariance_along_branch(A_list, B_list, method=method, tol=tol, warm=warm)
        for k, i in enumerate(run):
            cov = results[k]
            res.covariances[i] = cov
            if cov is None:
                continue
            try:
                res.ellipsoids[i] = Ellipsoid.from_covariance(pts[k].x_star, cov.C, cfg.confidence)
            except ValueError as exc:
                failures.append(f"{branch.name}[{i}]: ellipsoid: {exc}")
        failures += [f"{branch.name}[{run[k]}]: covariance: {msg}" for k, msg in fails]
        res.order += run
    return res, failures


# ----------------------------------------------------------------------------
# A3: distances


def _pair_tol(cfg):
    return cfg.parameter.step * (10.0 if cfg.parameter.adaptive else 1.0)


def distance_pairs(cfg, results):
    """Configured pairs, or every pair of branches that carry ellipsoids.

    In automatic pairs branch A is the one with fewer stable points.
    """
    if cfg.distance.pairs is not None:
        return [tuple(p) for p in cfg.distance.pairs if p[0] in results and p[1] in results]
    names = [k for k, r in results.items() if r.order]
    pairs = []
    for a, b in itertools.combinations(names, 2):
        if len(results[b].order) < len(results[a].order):
            a, b = b, a
        pairs.append((a, b))
    return pairs


def branch_distances(cfg, ra, rb, warm=None, every_k=None):
    """Distance sweep between the stable neighbourhoods of two branches."""
    d = cfg.distance
    pa, pb = ra.branch.points, rb.branch.points
    ea = [ra.ellipsoids[i] for i in ra.order]
    eb = [rb.ellipsoids[i] for i in rb.order]
    return distance_along_branch(
        ea, eb, [pa[i].mu for i in ra.order], [pb[i].mu for i in rb.order],
        tol=d.tol, pair_tol=_pair_tol(cfg), every_k=d.every_k if every_k is None else every_k,
        warm=d.warm if warm is None else warm, max_iter=d.max_iter,
    )


# ----------------------------------------------------------------------------
# simulation and Kramers


def stable_equilibrium_at(system, branch, mu, tol):
    """Newton-refined stable equilibrium of ``branch`` at exactly ``mu``.

    The start is the stable point nearest in ``mu`` (within ``tol``).
    """
    cand = [p for p in branch.points if p.stability == "stable"]
    if not cand:
        raise PreconditionError(f"branch {branch.name} has no stable points")
    p = min(cand, key=lambda q: abs(q.mu - mu))
    if abs(p.mu - mu) > tol:
        raise PreconditionError(f"branch {branch.name} has no stable point near {mu:g}")
    x = newton_equilibrium(system, p.x_star, mu)
    if classify_stability(eigenvalues_dense(eval_jacobian(system, x, mu))) != "stable":
        raise PreconditionError(f"branch {branch.name}: equilibrium at {mu:g} is not stable")
    return x


def run_simulation(cfg, system, branches, pair):
    """Passage statistics at each ``simulate.mu``; returns (rows, path, failures)."""
    s = cfg.simulate
    sigma = cfg.noise.sigma if s.sigma is None else s.sigma
    noise = NoiseSpec.for_system(system, sigma)
    sim = SimulationConfig(dt=s.dt, t_max=s.t_max, rho=s.rho, n_paths=s.n_paths, rng_seed=s.seed)
    tol = 2.0 * _pair_tol(cfg)
    a, b = pair
    rows, failures, path = [], [], None
    for mu in s.mu:
        try:
            p1 = stable_equilibrium_at(system, branches[a], mu, tol)
            p2 = stable_equilibrium_at(system, branches[b], mu, tol)
            stats = simulate_passages(system, noise, sim, mu, p1, p2, workers=s.workers)
        except MetacontError as exc:
            failures.append(f"simulate at {mu:g}: {exc}")
            rows.append((mu, None))
            continue
        rows.append((mu, stats))
    if s.path is not None:
        try:
            x0 = stable_equilibrium_at(system, branches[a], s.path.mu, tol)
            pc = dataclasses.replace(sim, t_max=s.path.t_max or s.t_max)
            path = euler_maruyama(system, noise, pc, s.path.mu, x0=x0, record_every=s.path.decimate)
        except MetacontError as exc:
            failures.append(f"simulate path at {s.path.mu:g}: {exc}")
    return rows, path, failures


def _index1(point):
    return int(np.count_nonzero(np.real(point.eigenvalues) > 0)) == 1


def run_kramers(cfg, system, branches):
    """Eyring-Kramers estimates; returns ({name: [(sigma, mu, est, msg)]}, failures)."""
    k = cfg.kramers
    saddle = k.saddle_branch
    if saddle is None:
        counts = {n: sum(_index1(p) for p in b.points) for n, b in branches.items()}
        saddle = max(counts, key=counts.get) if counts and max(counts.values()) > 0 else None
    if saddle is None or saddle not in branches:
        return {}, ["kramers: no branch of index-1 saddles"]
    sp = [p for p in branches[saddle].points if _index1(p)]
    names = k.min_branches or [n for n, b in branches.items()
                               if n != saddle and any(p.stability == "stable" for p in b.points)]
    out, failures = {}, []
    for name in names:
        if name not in branches:
            continue
        mp = [p for p in branches[name].points if p.stability == "stable"]
        rows = []
        for sigma in k.sigmas:
            for mu, est, msg in kramers_along_branch(system, mp, sp, sigma, pair_tol=_pair_tol(cfg)):
                rows.append((sigma, mu, est, msg))
                if est is None:
                    failures.append(f"kramers {name} at {mu:g}: {msg}")
        out[name] = rows
    return out, failures


# ----------------------------------------------------------------------------
# output


def _branch_rows(branch):
    n = branch.points[0].x_star.size if branch.points else 0
    marks = {}
    for ev in branch.events:
        marks.setdefault(ev.index, []).append(ev.kind)
    cols = ["index", "mu"] + [f"x_{i + 1}" for i in range(n)] + ["max_re_eig", "stability", "event"]
    rows = [[i, p.mu, *p.x_star, p.max_re_eig, p.stability, ";".join(marks.get(i, []))]
            for i, p in enumerate(branch.points)]
    return cols, rows


def _covariance_rows(res):
    n = res.branch.points[0].x_star.size
    iu = list(zip(*np.triu_indices(n)))
    cols = (["index", "mu"] + [f"C_{i + 1}{j + 1}" for i, j in iu]
            + ["residual", "method", "iterations", "numerical_rank", "major_semi_axis"])
    rows = []
    for i in res.order:
        p, c, e = res.branch.points[i], res.covariances[i], res.ellipsoids[i]
        if c is None:
            rows.append([i, p.mu] + [np.nan] * len(iu) + [np.nan, "failed", 0, 0, np.nan])
            continue
        rows.append([i, p.mu] + [c.C[a, b] for a, b in iu]
                    + [c.residual, c.method, c.iterations, c.numerical_rank,
                       e.major_semi_axis if e is not None else np.nan])
    return cols, rows


def _ellipse_rows(res, every):
    rows = []
    for k, i in enumerate(res.order[::every]):
        e = res.ellipsoids[i]
        if e is None:
            continue
        mu = res.branch.points[i].mu
        for j, (x1, x2) in enumerate(e.boundary(64)):
            rows.append([mu, j, x1, x2])
    return ["mu", "theta_index", "x1", "x2"], rows


def _distance_rows(sweep, n):
    cols = ["mu", "delta"] + [f"v_{i + 1}" for i in range(n)] + ["iterations", "function_evals", "converged"]
    rows = []
    for mu, r, _ in sweep:
        if r is None:
            rows.append([mu, np.nan] + [np.nan] * n + [0, 0, False])
        else:
            rows.append([mu, r.delta, *r.v_star, r.iterations, r.function_evals, r.converged])
    return cols, rows


def _summary(cfg, result):
    return {
        "model": cfg.model.builtin or cfg.model.expression.name,
        "config": cfg.model_dump(mode="json", exclude={"output"}),
        "status": result.status,
        "branches": [
            {
                "name": name,
                "points": len(r.branch.points),
                "stable_points": len(r.order),
                "closed": r.branch.closed,
                "termination": r.branch.termination,
                "events": [{"kind": e.kind, "mu": e.mu, "x": list(e.x), "index": e.index}
                           for e in r.branch.events],
            }
            for name, r in result.branches.items()
        ],
        "distances": {
            key: {
                "evaluations": len(sw),
                "negative": int(sum(1 for _, r, _ in sw if r is not None and r.delta < 0)),
                "failed": int(sum(1 for _, r, _ in sw if r is None or not r.converged)),
            }
            for key, sw in result.distances.items()
        },
        "failures": list(result.failures),
    }


def write_outputs(cfg, result, out_dir, path=None):
    fmt = cfg.output.format
    out = Path(out_dir)
    files = []
    for name, r in result.branches.items():
        if not r.branch.points:
            continue
        files.append(io.write_table(out / f"branch_{name}.csv", *_branch_rows(r.branch), fmt=fmt))
        if r.order:
            files.append(io.write_table(out / f"covariance_{name}.csv", *_covariance_rows(r), fmt=fmt))
            if r.branch.points[0].x_star.size == 2:
                files.append(io.write_table(out / f"ellipses_{name}.csv",
                                            *_ellipse_rows(r, cfg.output.ellipse_every), fmt=fmt))
    for key, sweep in result.distances.items():
        n = next(iter(result.branches.values())).branch.points[0].x_star.size
        files.append(io.write_table(out / f"distance_{key}.csv", *_distance_rows(sweep, n), fmt=fmt))
    if result.passages:
        rows = []
        for mu, st in result.passages:
            if st is None:
                rows.append([mu, np.nan, np.nan, 0, np.nan])
            else:
                rows.append([mu, st.mean, st.stderr, len(st.counts), st.raw_mean])
        files.append(io.write_table(out / "passages.csv",
                                    ["mu", "T_p_mean", "T_p_stderr", "n_paths", "T_p_raw_mean"],
                                    rows, fmt=fmt))
    if path is not None:
        n = path.x.shape[1]
        files.append(io.write_table(out / "path.csv", ["t"] + [f"x_{i + 1}" for i in range(n)],
                                    [[t, *x] for t, x in zip(path.t, path.x)], fmt=fmt))
    for name, rows in result.kramers.items():
        cols = ["mu", "barrier", "lambda_unstable", "det_saddle", "det_min", "expected_time",
                "rayleigh_iters", "sigma"]
        table = []
        for sigma, mu, est, _ in rows:
            if est is None:
                table.append([mu] + [np.nan] * 5 + [0, sigma])
            else:
                table.append([mu, est.barrier, est.lambda_unstable, est.det_saddle, est.det_min,
                              est.expected_time, est.rayleigh_iters, sigma])
        files.append(io.write_table(out / f"kramers_{name}.csv", cols, table, fmt=fmt))
    if cfg.output.figures:
        files += _figures(cfg, result, out)
    files.append(io.write_json(out / "summary.json", _summary(cfg, result)))
    return [str(f) for f in files]


def _figures(cfg, result, out):
    from . import plotting

    pname = next(iter(result.branches.values())).branch.system.parameter_name if result.branches else "mu"
    files = []
    branches = {k: r.branch for k, r in result.branches.items() if r.branch.points}
    if branches:
        files.append(plotting.plot_branches(branches, out / "branches.png", parameter=pname))
    ell = {k: ([r.branch.points[i] for i in r.order], [r.ellipsoids[i] for i in r.order])
           for k, r in result.branches.items() if r.order}
    if ell:
        files.append(plotting.plot_ellipsoids(ell, out / "ellipsoids.png", parameter=pname))
    for key, sw in result.distances.items():
        ok = [(mu, r.delta) for mu, r, _ in sw if r is not None]
        if ok:
            mu, d = zip(*ok)
            files.append(plotting.plot_distance(mu, d, out / f"distance_{key}.png", parameter=pname))
    ok = [(mu, st.mean, st.stderr) for mu, st in result.passages if st is not None]
    if ok:
        mu, m, s = zip(*ok)
        files.append(plotting.plot_passages(mu, m, s, out / "passages.png", parameter=pname))
    for name, rows in result.kramers.items():
        curves = {}
        for sigma, mu, est, _ in rows:
            if est is not None:
                curves.setdefault(sigma, ([], []))
                curves[sigma][0].append(mu)
                curves[sigma][1].append(est.expected_time)
        if curves:
            files.append(plotting.plot_kramers(curves, out / f"kramers_{name}.png", parameter=pname))
    return files


# ----------------------------------------------------------------------------
# driver


def run_pipeline(cfg, stages=STAGES, branches=None, write=True, log=None):
    """Execute the requested stages and write their output files.

    Parameters
    ----------
    cfg : RunConfig
    stages : iterable of str
        Subset of :data:`STAGES`.  ``distance`` implies ``covariance``.
    branches : dict, optional
        Pre-computed branches (skips continuation), e.g. from
        :func:`read_branches`.
    write : bool
        Write files to ``cfg.output.directory``.
    log : callable, optional
        Receives progress lines.

    Returns
    -------
    PipelineResult
        ``status`` is 0 when every point succeeded and 2 otherwise.
    """
    say = log or (lambda msg: None)
    stages = set(stages)
    unknown = stages - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stages {sorted(unknown)}")
    if "distance" in stages:
        stages.add("covariance")
    system = build_system(cfg)
    _validate_against(cfg, system)
    result = PipelineResult()
    if branches is None:
        branches, fails = trace_branches(cfg, system)
        result.failures += fails
    for name, br in branches.items():
        ev = ", ".join(f"{e.kind} at {e.mu:.6g}" for e in br.events) or "no events"
        say(f"branch {name}: {len(br.points)} points, {br.termination}; {ev}")
    for name, br in branches.items():
        if "covariance" in stages:
            r, fails = branch_covariances(cfg, system, br)
            result.failures += fails
        else:
            r = BranchResult(name, br, [None] * len(br.points), [None] * len(br.points), [])
        result.branches[name] = r
    if "distance" in stages and cfg.distance.enabled:
        for a, b in distance_pairs(cfg, result.branches):
            sweep = branch_distances(cfg, result.branches[a], result.branches[b])
            result.distances[f"{a}__{b}"] = sweep
            bad = [mu for mu, r, _ in sweep if r is None or not r.converged]
            result.failures += [f"distance {a}/{b} at {mu:.6g}: failed" for mu in bad]
            neg = sum(1 for _, r, _ in sweep if r is not None and r.delta < 0)
            say(f"distance {a}/{b}: {len(sweep)} evaluations, {neg} negative")
    path = None
    if "simulate" in stages and cfg.simulate is not None:
        pair = cfg.simulate.pair
        if pair is None:
            pairs = distance_pairs(cfg, {k: BranchResult(k, b, order=[i for i, p in enumerate(b.points)
                                                                        if p.stability == "stable"])
                                         for k, b in branches.items()})
            pair = pairs[0] if pairs else None
        if pair is None:
            result.failures.append("simulate: need two branches with stable equilibria")
        else:
            rows, path, fails = run_simulation(cfg, system, branches, pair)
            result.passages = rows
            result.failures += fails
            for mu, st in rows:
                if st is not None:
                    say(f"T_p at {mu:g}: {st.mean:.4g} +- {st.stderr:.2g}")
    if "kramers" in stages and cfg.kramers is not None:
        result.kramers, fails = run_kramers(cfg, system, branches)
        result.failures += fails
    result.status = 2 if result.failures else 0
    if write:
        result.files = write_outputs(cfg, result, cfg.output.directory, path)
    return result


# ----------------------------------------------------------------------------
# benchmarks

_BENCH_METHODS = (
    ("gauss-seidel", True, "gauss-seidel-warm"),
    ("gauss-seidel", False, "gauss-seidel-cold"),
    ("smith", False, "smith"),
    ("bartels-stewart", False, "bartels-stewart"),
)


def benchmark_solvers(cfg, branches, tols=BENCH_TOLS, methods=None):
    """Total iterations and wall time of each Lyapunov solver per tolerance.

    ``methods`` optionally restricts the run to some of the labels
    ``gauss-seidel-warm``, ``gauss-seidel-cold``, ``smith`` and
    ``bartels-stewart``.

    Warm Gauss-Seidel initializes each stable run with Bartels-Stewart and
    then reuses the previous solution; cold Gauss-Seidel starts every point
    from zero.  Iterative failures are counted, not replaced by a direct
    solve.

    Returns
    -------
    columns, rows
        Rows ``tol, method, points, total_iterations, failed, wall_time_s``.
    """
    system = build_system(cfg)
    sig2 = cfg.noise.sigma ** 2
    problems = []
    for br in branches.values():
        for run in br.stable_runs():
            pts = [br.points[i] for i in run]
            problems.append(([p.jacobian for p in pts],
                             [sig2 * noise_covariance(system, p.x_star, p.mu) for p in pts]))
    chosen = [m for m in _BENCH_METHODS if methods is None or m[2] in methods]
    rows = []
    for tol in tols:
        for method, warm, label in chosen:
            total = points = failed = 0
            t0 = time.perf_counter()
            for A_list, B_list in problems:
                res, fails = covariance_along_branch(A_list, B_list, method=method, tol=tol, warm=warm,
                                                     init_direct=warm, fallback=False)
                total += sum(r.iterations for r in res if r is not None)
                points += len(res)
                failed += len(fails)
            rows.append([tol, label, points, total, failed, time.perf_counter() - t0])
    return ["tol", "method", "points", "total_iterations", "failed", "wall_time_s"], rows


def benchmark_distance(cfg, results):
    """Warm- against cold-started distance sweeps for each branch pair."""
    rows = []
    for a, b in distance_pairs(cfg, results):
        for warm in (True, False):
            t0 = time.perf_counter()
            sweep = branch_distances(cfg, results[a], results[b], warm=warm)
            dt = time.perf_counter() - t0
            ok = [r for _, r, _ in sweep if r is not None]
            rows.append([f"{a}__{b}", "warm" if warm else "cold", len(sweep),
                         sum(r.iterations for r in ok), sum(r.function_evals for r in ok),
                         sum(1 for r in ok if r.converged), len(sweep) - len(ok), dt])
    cols = ["pair", "mode", "evaluations", "total_iterations", "total_function_evals",
            "converged", "failed", "wall_time_s"]
    return cols, rows
