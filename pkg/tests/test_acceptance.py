"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from helpers import criterion, random_hurwitz, random_psd
from metacont import pipeline as pl
from metacont.cli import main
from metacont.config import load_config
from metacont.continuation import newton_equilibrium
from metacont.ellipsoid import (
    Ellipsoid,
    distance,
    objective,
    objective_gradient,
    objective_hessian,
)
from metacont.kramers import eyring_kramers_time, rayleigh_leading_eigen
from metacont.lyapunov import (
    METHODS,
    controllability_rank,
    covariance_degeneracy,
    lyapunov_residual,
    solve_lyapunov,
)
from metacont.models import NoiseSpec, eval_jacobian, get_model, noise_covariance
from metacont.sdesim import SimulationConfig, first_passage_times, simulate_passages

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="module")
def neural2():
    cfg = load_config(CONFIGS / "neural2.yaml")
    t0 = time.perf_counter()
    res = pl.run_pipeline(cfg, stages=("continue", "covariance", "distance"), write=False)
    return cfg, res, time.perf_counter() - t0


def _negative_intervals(mu, delta):
    """Maximal runs of delta < 0 along increasing mu, as (first, last) mu pairs."""
    o = np.argsort(mu)
    mu, delta = np.asarray(mu)[o], np.asarray(delta)[o]
    runs, start = [], None
    for i, neg in enumerate(delta < 0):
        if neg and start is None:
            start = i
        if not neg and start is not None:
            runs.append((mu[start], mu[i - 1]))
            start = None
    if start is not None:
        runs.append((mu[start], mu[-1]))
    return runs


def _sweep_arrays(res):
    sweep = res.distances["isola__main"]
    mu = np.array([m for m, r, _ in sweep])
    delta = np.array([r.delta for _, r, _ in sweep])
    return mu, delta


def test_c01_pitchfork_half_width():
    with criterion(1, "pitchfork half-width equals sigma h / (2 sqrt mu)") as c:
        cfg = load_config(CONFIGS / "pitchfork.yaml")
        system = pl.build_system(cfg)
        sigma, h = cfg.noise.sigma, cfg.confidence
        assert (sigma, h) == (0.5, 6.0)
        t0 = time.perf_counter()
        errs = []
        for mu in (0.5, 1.5, 2.5):
            x = newton_equilibrium(system, [math.sqrt(mu) + 0.1], mu)
            A = eval_jacobian(system, x, mu)
            B = sigma ** 2 * noise_covariance(system, x, mu)
            for method in METHODS:
                C = solve_lyapunov(A, B, method, tol=cfg.solver.tol).C
                E = Ellipsoid.from_covariance(x, C, h)
                errs.append(abs(E.half_width([1.0]) - sigma * h / (2 * math.sqrt(mu))))
        elapsed = time.perf_counter() - t0
        # the same law at every stable point of the continued branches
        res = pl.run_pipeline(cfg, stages=("continue", "covariance"), write=False)
        for r in res.branches.values():
            for i in r.order:
                mu = r.branch.points[i].mu
                errs.append(abs(r.ellipsoids[i].major_semi_axis - sigma * h / (2 * math.sqrt(mu))))
        c.note(f"max error {max(errs):.2e}, {elapsed:.3f} s")
        assert max(errs) <= 1e-10
        assert elapsed < 1.0


def test_c02_degenerate_covariance():
    with criterion(2, "degenerate worked example, all solvers, rank 1") as c:
        sigma = 0.5
        A = np.diag([-2.0, -1.0])
        B = np.diag([sigma ** 2, 0.0])
        expect = np.diag([sigma ** 2 / 4, 0.0])
        errs = []
        for method in METHODS:
            r = solve_lyapunov(A, B, method, tol=1e-14)
            errs.append(np.abs(r.C - expect).max())
            assert r.numerical_rank == 1
        F = sigma * np.array([[1.0], [0.0]])
        assert controllability_rank(A, F) == 1
        rank, _ = covariance_degeneracy(solve_lyapunov(A, B).C)
        sv = np.linalg.svd(solve_lyapunov(A, B).C, compute_uv=False)
        assert rank == 1 and int(np.count_nonzero(sv > 1e-10 * sv[0])) == 1
        c.note(f"max error {max(errs):.1e}")
        assert max(errs) <= 1e-12


def test_c03_cross_solver_equivalence():
    with criterion(3, "200 random Hurwitz problems, pairwise agreement") as c:
        rng = np.random.default_rng(3)
        tol = 1e-9
        worst_pair = worst_res = 0.0
        t0 = time.perf_counter()
        for _ in range(200):
            n = int(rng.integers(1, 21))
            A = random_hurwitz(rng, n)
            B, _ = random_psd(rng, n)
            rs = [solve_lyapunov(A, B, m, tol=tol) for m in METHODS]
            bound = 10 * tol * (1 + np.linalg.norm(B))
            for r in rs:
                assert r.residual == pytest.approx(lyapunov_residual(A, B, r.C), abs=1e-15)
                worst_res = max(worst_res, r.residual / bound)
            for i in range(3):
                for j in range(i):
                    worst_pair = max(worst_pair, float(np.linalg.norm(rs[i].C - rs[j].C)))
        elapsed = time.perf_counter() - t0
        c.note(f"max pairwise {worst_pair:.1e}, max residual/bound {worst_res:.2f}, {elapsed:.1f} s")
        assert worst_pair <= 1e-7
        assert worst_res <= 1.0
        assert elapsed < 30.0


def test_c04_warm_start_benefit(neural2):
    with criterion(4, "warm Gauss-Seidel beats cold at tol 1e-2..1e-7; sweep < 60 s") as c:
        cfg, res, _ = neural2
        t0 = time.perf_counter()
        for r in res.branches.values():
            pl.branch_covariances(cfg, pl.build_system(cfg), r.branch)
        sweep = time.perf_counter() - t0
        branches = {k: r.branch for k, r in res.branches.items()}
        tols = [10.0 ** -k for k in range(2, 8)]
        _, rows = pl.benchmark_solvers(cfg, branches, tols=tols,
                                       methods=("gauss-seidel-warm", "gauss-seidel-cold"))
        table = {(r[0], r[1]): r[3] for r in rows}
        ratio = max(table[(t, "gauss-seidel-warm")] / table[(t, "gauss-seidel-cold")] for t in tols)
        c.note(f"sweep {sweep:.1f} s, worst warm/cold ratio {ratio:.2f}")
        for t in tols:
            assert table[(t, "gauss-seidel-warm")] < table[(t, "gauss-seidel-cold")]
        assert sweep < 60.0


def test_c05_neural2_structure(neural2):
    with criterion(5, "isola with two folds; two negative delta intervals; invariants") as c:
        cfg, res, _ = neural2
        isola = res.branches["isola"].branch
        folds = [e for e in isola.events if e.kind == "fold"]
        assert isola.closed and len(folds) == 2
        mu, delta = _sweep_arrays(res)
        runs = _negative_intervals(mu, delta)
        c.note(f"folds at {', '.join(f'{e.mu:.4f}' for e in folds)}; "
               f"negative on {', '.join(f'[{a:.4f}, {b:.4f}]' for a, b in runs)}")
        assert len(runs) == 2
        # symmetry and translation on a sample of the pairs
        ra, rb = res.branches["isola"], res.branches["main"]
        shift = np.array([0.3, -1.7])
        ea = [e for e in ra.ellipsoids if e is not None][::97]
        eb = [e for e in rb.ellipsoids if e is not None][::97]
        for e1, e2 in zip(ea, eb):
            d = distance(e1, e2).delta
            assert distance(e2, e1).delta == pytest.approx(d, abs=1e-9)
            t1 = Ellipsoid(e1.center + shift, e1.shape)
            t2 = Ellipsoid(e2.center + shift, e2.shape)
            assert distance(t1, t2).delta == pytest.approx(d, abs=1e-10)


def test_c06_monte_carlo_concordance(neural2):
    with criterion(6, "T_p > 3 stderr where delta < 0, T_p <= stderr where delta > 0.2") as c:
        cfg, res, _ = neural2
        system = pl.build_system(cfg)
        s = cfg.simulate
        assert (s.rho, s.t_max, s.n_paths) == (0.05, 1000.0, 100)
        mu, delta = _sweep_arrays(res)
        runs = _negative_intervals(mu, delta)
        inside = [0.5 * (a + b) for a, b in runs]
        # well separated points taken from the computed curve
        outside = []
        for m in (0.7, 1.0, 1.4):
            near = delta[np.argmin(np.abs(mu - m))]
            assert near > 0.2
            outside.append(m)
        noise = NoiseSpec.for_system(system, s.sigma)
        sim = SimulationConfig(dt=s.dt, t_max=s.t_max, rho=s.rho, n_paths=s.n_paths, rng_seed=s.seed)
        tol = 2 * cfg.parameter.step
        rows = []
        for m, want_positive in [(m, True) for m in inside] + [(m, False) for m in outside]:
            p1 = pl.stable_equilibrium_at(system, res.branches["isola"].branch, m, tol)
            p2 = pl.stable_equilibrium_at(system, res.branches["main"].branch, m, tol)
            st = simulate_passages(system, noise, sim, m, p1, p2, workers=4)
            rows.append((m, want_positive, st.mean, st.stderr))
        c.note("; ".join(f"{m:.3f}: {t:.3f}+-{e:.3f}" for m, _, t, e in rows))
        bad = [m for m, pos, t, e in rows if not ((t > 3 * e and t > 0) if pos else t <= e)]
        assert not bad, f"criterion violated at mu = {bad}"


def test_c07_rm_hopf_and_growth():
    with criterion(7, "RM Hopf at 2 +- 0.01; major semi-axis increasing towards it") as c:
        cfg = load_config(CONFIGS / "rosenzweig_macarthur.yaml")
        assert cfg.model.params == {"beta": 3.0, "m": 1.0}
        assert (cfg.confidence, cfg.noise.sigma) == (1.0, 0.01)
        res = pl.run_pipeline(cfg, stages=("continue", "covariance"), write=False)
        r = res.branches["coexistence"]
        hopf = [e for e in r.branch.events if e.kind == "hopf"]
        assert len(hopf) == 1 and abs(hopf[0].mu - 2.0) <= 0.01
        pts = sorted((r.branch.points[i].mu, r.ellipsoids[i].major_semi_axis) for i in r.order)
        g = np.array(pts)
        # the axis has one interior minimum (the transcritical point at gamma = 1/2
        # slows the dynamics too); from there it grows up to the Hopf point
        k = int(np.argmin(g[:, 1]))
        tail = g[k:]
        c.note(f"Hopf at {hopf[0].mu:.6f}; axis increasing on [{tail[0, 0]:.3f}, {tail[-1, 0]:.4f}] "
               f"from {tail[0, 1]:.4g} to {tail[-1, 1]:.4g}")
        assert tail[-1, 0] > 1.99 and tail[0, 0] < 0.7
        assert np.all(np.diff(tail[:, 1]) > 0)


def test_c08_sqp_derivatives():
    with criterion(8, "SQP gradient/Hessian vs finite differences; closed forms") as c:
        rng = np.random.default_rng(8)
        worst_g = worst_h = 0.0
        for _ in range(100):
            n = int(rng.integers(2, 6))
            M1, M2 = rng.normal(size=(n, n)), rng.normal(size=(n, n))
            Q1, Q2 = M1 @ M1.T + 0.1 * np.eye(n), M2 @ M2.T + 0.1 * np.eye(n)
            x1, x2 = rng.normal(size=n), rng.normal(size=n)
            v = rng.normal(size=n)
            args = (x1, Q1, x2, Q2)
            g = objective_gradient(v, *args)
            H = objective_hessian(v, *args)
            eps = 1e-6
            gfd = np.array([(objective(v + eps * e, *args) - objective(v - eps * e, *args)) / (2 * eps)
                            for e in np.eye(n)])
            hfd = np.array([(objective_gradient(v + eps * e, *args)
                             - objective_gradient(v - eps * e, *args)) / (2 * eps) for e in np.eye(n)])
            worst_g = max(worst_g, np.linalg.norm(g - gfd) / np.linalg.norm(g))
            worst_h = max(worst_h, np.linalg.norm(H - hfd.T) / np.linalg.norm(H))
        closed = []
        E = lambda cen, Q: Ellipsoid(np.asarray(cen, float), np.atleast_2d(np.asarray(Q, float)))
        closed.append(distance(E([0, 0], np.eye(2)), E([3, 0], np.eye(2))).delta - 1.0)
        closed.append(distance(E([0, 0], np.eye(2)), E([0, 0], np.eye(2))).delta + 2.0)
        closed.append(distance(E([0, 0, 0], 4 * np.eye(3)), E([1, 2, 2], 0.25 * np.eye(3))).delta - 0.5)
        for a, b, r1, r2 in [(0.0, 3.0, 1.0, 0.5), (1.0, -2.0, 0.25, 0.25), (0.0, 0.5, 1.0, 1.0)]:
            closed.append(distance(E([a], [[r1 * r1]]), E([b], [[r2 * r2]])).delta - (abs(b - a) - r1 - r2))
        worst_c = max(abs(x) for x in closed)
        c.note(f"gradient {worst_g:.1e}, Hessian {worst_h:.1e}, closed forms {worst_c:.1e}")
        assert worst_g < 1e-6 and worst_h < 1e-4 and worst_c <= 1e-8


def test_c09_kramers_validation():
    with criterion(9, "Monte-Carlo exit time vs Eyring-Kramers within factor 1.5") as c:
        sys_ = get_model("pitchfork")
        mu, sigma = 1.0, 0.5
        est, _ = eyring_kramers_time(sys_, [1.0], [0.0], mu, sigma)
        theory = math.pi * math.sqrt(2.0) * math.exp(1.0 / (2 * sigma ** 2))
        assert est.expected_time == pytest.approx(theory, rel=1e-10)
        cfg = SimulationConfig(dt=1e-3, t_max=2000.0, n_paths=5000, rng_seed=9)
        t0 = time.perf_counter()
        times = first_passage_times(sys_, NoiseSpec(sigma), cfg, mu, [1.0], [-1.0], sigma ** 2 / 2,
                                    workers=4)
        elapsed = time.perf_counter() - t0
        assert np.all(np.isfinite(times))
        mc = float(times.mean())
        ratio = mc / theory
        # property part: decreasing in sigma, increasing in mu (for mu > sigma)
        ts = [eyring_kramers_time(sys_, [1.0], [0.0], 1.0, s)[0].expected_time for s in (0.3, 0.4, 0.5, 0.7)]
        tm = [eyring_kramers_time(sys_, [math.sqrt(m)], [0.0], m, 0.15)[0].expected_time
              for m in np.linspace(0.2, 2.5, 24)]
        c.note(f"MC {mc:.2f} +- {times.std(ddof=1) / math.sqrt(times.size):.2f} vs {theory:.4f}, "
               f"ratio {ratio:.3f}, {elapsed:.0f} s")
        assert 1 / 1.5 <= ratio <= 1.5
        assert np.all(np.diff(ts) < 0) and np.all(np.diff(tm) > 0)
        assert elapsed < 300


def test_c10_rayleigh_sweeps():
    with criterion(10, "warm Rayleigh sweeps: <= 5 iterations, residual 1e-10, eigenvalues 1e-9") as c:
        rng = np.random.default_rng(10)
        n = 8
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        S = rng.normal(size=(n, n))
        S = 0.5 * (S + S.T) / np.linalg.norm(S, 2)
        d = np.array([-1.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5])
        worst_it = worst_res = worst_eig = 0
        prev = None
        for mu in np.linspace(0.0, 2.0, 201):
            A = (Q * (d - mu * np.eye(n)[0])) @ Q.T + 0.2 * mu * S
            r = rayleigh_leading_eigen(A, tol=1e-10) if prev is None else \
                rayleigh_leading_eigen(A, prev.v, prev.lam, tol=1e-10)
            if prev is not None:
                worst_it = max(worst_it, r.iterations)
            worst_res = max(worst_res, float(np.linalg.norm(A @ r.v - r.lam * r.v)))
            worst_eig = max(worst_eig, abs(r.lam - np.linalg.eigvalsh(A)[0]))
            assert not r.fallback
            prev = r
        # along the pitchfork saddle branch (1-D Hessian -mu)
        sys_ = get_model("pitchfork")
        warm = None
        for mu in np.linspace(0.2, 2.5, 47):
            est, warm = eyring_kramers_time(sys_, [math.sqrt(mu)], [0.0], mu, 0.5, warm=warm)
            worst_it = max(worst_it, est.rayleigh_iters)
            worst_eig = max(worst_eig, abs(warm.lam + mu))
        c.note(f"max iterations {worst_it}, residual {worst_res:.1e}, eigenvalue error {worst_eig:.1e}")
        assert worst_it <= 5 and worst_res <= 1e-10 and worst_eig <= 1e-9


def test_c11_reproducibility(tmp_path):
    with criterion(11, "seeded pipeline runs produce byte-identical data files") as c:
        data = yaml.safe_load((CONFIGS / "pitchfork.yaml").read_text())
        data["simulate"] = {"mu": [0.5, 1.0], "t_max": 50.0, "n_paths": 8, "seed": 123,
                            "workers": 2, "path": {"mu": 0.5, "decimate": 10}}
        cfg = tmp_path / "seeded.yaml"
        cfg.write_text(yaml.safe_dump(data))
        outs = [tmp_path / "a", tmp_path / "b"]
        for o in outs:
            assert main(["pipeline", str(cfg), "--out", str(o), "-q"]) == 0
        files = [{p.name: p.read_bytes() for p in sorted(o.iterdir())} for o in outs]
        c.note(f"{len(files[0])} files compared")
        assert files[0].keys() == files[1].keys() and len(files[0]) > 5
        assert all(files[0][k] == files[1][k] for k in files[0])
