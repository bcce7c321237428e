"""Euler-Maruyama simulation and metastable passage counting.

Paths follow ``x_{i+1} = x_i + f(x_i) dt + sigma Phi(x_i) sqrt(dt) xi_i``.
Path ``i`` of an ensemble draws its normals from its own PCG64 stream,
seeded by ``SeedSequence(rng_seed, spawn_key=(i,))``, so every path is
reproducible on its own and ensemble results do not depend on scheduling.

Systems that carry :class:`~metacont.models.SimKernels` are integrated by
numba kernels compiled per system; other systems run the same loops in
plain Python.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import PreconditionError
from .models import NoiseSpec, noise_covariance

__all__ = [
    "SimulationConfig",
    "SamplePath",
    "PassageCount",
    "PassageStats",
    "euler_maruyama",
    "count_passages",
    "simulate_passages",
    "mean_passages",
    "first_passage_times",
    "path_rng",
]


@dataclass(frozen=True)
class SimulationConfig:
    """Time stepping, horizon and ensemble settings.

    ``rho`` is the radius of the balls used for passage counting.  The
    per-path streams are derived from ``rng_seed`` (a 64-bit integer).
    """

    dt: float = 1e-3
    t_max: float = 1000.0
    rho: float = 0.05
    n_paths: int = 100
    rng_seed: int = 0
    initial_state: Optional[tuple] = None
    chunk: int = 1 << 16

    def __post_init__(self):
        if not (self.dt > 0 and self.dt < self.t_max):
            raise ValueError(f"need 0 < dt < t_max, got dt={self.dt}, t_max={self.t_max}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not (0 <= int(self.rng_seed) < 2 ** 64):
            raise ValueError("rng_seed must be a 64-bit unsigned integer")
        if self.chunk < 1:
            raise ValueError("chunk must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.t_max / self.dt))


@dataclass(frozen=True)
class SamplePath:
    t: np.ndarray
    x: np.ndarray
    reflections: int = 0
    blowup: bool = False
    message: str = ""


@dataclass(frozen=True)
class PassageCount:
    """Counted transits between two balls.

    ``t_1to2``/``t_2to1`` use alternation: a passage ``1 -> 2`` is counted at
    the first entry into ball 2 after an entry into ball 1, and the counter
    re-arms only on the next entry into ball 1.  ``raw_*`` pair every entry
    into the source ball with the next entry into the target ball.
    """

    t_1to2: int = 0
    t_2to1: int = 0
    raw_1to2: int = 0
    raw_2to1: int = 0

    @property
    def total(self):
        return self.t_1to2 + self.t_2to1

    @property
    def raw_total(self):
        return self.raw_1to2 + self.raw_2to1


@dataclass(frozen=True)
class PassageStats:
    mean: float
    stderr: float
    raw_mean: float
    counts: tuple
    reflections: int = 0
    blowups: int = 0


def path_rng(seed, index):
    """Generator for path ``index`` of an ensemble seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


# ----------------------------------------------------------------------------
# passage state machine; cs = [last, n12, n21, raw12, raw21, pend1, pend2, in1, in2]

_LAST, _N12, _N21, _R12, _R21, _P1, _P2, _IN1, _IN2 = range(9)


@njit(cache=True, nogil=True)
def _scan(x, p1, p2, rho2, cs):
    d1 = 0.0
    d2 = 0.0
    for i in range(x.shape[0]):
        a = x[i] - p1[i]
        b = x[i] - p2[i]
        d1 += a * a
        d2 += b * b
    in1 = d1 < rho2
    in2 = d2 < rho2
    if in1 and cs[_IN1] == 0:
        if cs[_LAST] == 2:
            cs[_N21] += 1
        cs[_LAST] = 1
        cs[_R21] += cs[_P2]
        cs[_P2] = 0
        cs[_P1] += 1
    if in2 and cs[_IN2] == 0:
        if cs[_LAST] == 1:
            cs[_N12] += 1
        cs[_LAST] = 2
        cs[_R12] += cs[_P1]
        cs[_P1] = 0
        cs[_P2] += 1
    cs[_IN1] = 1 if in1 else 0
    cs[_IN2] = 1 if in2 else 0


@njit(cache=True, nogil=True)
def _scan_array(X, p1, p2, rho2, cs):
    for s in range(X.shape[0]):
        _scan(X[s], p1, p2, rho2, cs)


def _check_balls(p1, p2, rho):
    p1 = np.atleast_1d(np.asarray(p1, dtype=float))
    p2 = np.atleast_1d(np.asarray(p2, dtype=float))
    if p1.shape != p2.shape:
        raise ValueError("p1 and p2 must have equal shape")
    if not rho > 0:
        raise ValueError("rho must be positive")
    if not np.linalg.norm(p1 - p2) > 2.0 * rho:
        raise PreconditionError(
            f"passage balls overlap: |p1 - p2| = {np.linalg.norm(p1 - p2):.6g} <= 2 rho = {2 * rho:.6g}"
        )
    return p1, p2


def _counts(cs):
    return PassageCount(int(cs[_N12]), int(cs[_N21]), int(cs[_R12]), int(cs[_R21]))


def count_passages(path, p1, p2, rho):
    """Count passages of a recorded path between the ``rho``-balls about ``p1`` and ``p2``.

    ``path`` is a :class:`SamplePath` or an ``(m, n)`` array of states.
    """
    X = path.x if isinstance(path, SamplePath) else path
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    p1, p2 = _check_balls(p1, p2, rho)
    cs = np.zeros(9, dtype=np.int64)
    _scan_array(np.ascontiguousarray(X), p1, p2, rho * rho, cs)
    return _counts(cs)


# ----------------------------------------------------------------------------
# kernels


def _make_kernels(drift, noise, reflect, jit):
    deco = njit(nogil=True) if jit else (lambda fn: fn)

    if noise is None:
        @deco
        def step(x, mu, p, Phi, amp, dt, xi, f, G):
            drift(x, mu, p, f)
            nref = 0
            for i in range(x.shape[0]):
                acc = 0.0
                for j in range(xi.shape[0]):
                    acc += Phi[i, j] * xi[j]
                x[i] = x[i] + f[i] * dt + amp * acc
                if reflect and x[i] < 0.0:
                    x[i] = -x[i]
                    nref += 1
            return nref
    else:
        @deco
        def step(x, mu, p, Phi, amp, dt, xi, f, G):
            drift(x, mu, p, f)
            noise(x, mu, p, G)
            nref = 0
            for i in range(x.shape[0]):
                acc = 0.0
                for j in range(xi.shape[0]):
                    acc += G[i, j] * xi[j]
                x[i] = x[i] + f[i] * dt + amp * acc
                if reflect and x[i] < 0.0:
                    x[i] = -x[i]
                    nref += 1
            return nref

    @deco
    def finite(x):
        for i in range(x.shape[0]):
            if not math.isfinite(x[i]):
                return False
        return True

    @deco
    def run_record(x, mu, p, Phi, amp, dt, XI, f, G, rec, every, offset, nref):
        # returns the number of steps taken before a blow-up, or XI.shape[0]
        for s in range(XI.shape[0]):
            nref[0] += step(x, mu, p, Phi, amp, dt, XI[s], f, G)
            if not finite(x):
                return s
            k = offset + s + 1
            if k % every == 0:
                r = k // every
                for i in range(x.shape[0]):
                    rec[r, i] = x[i]
        return XI.shape[0]

    @deco
    def run_passages(x, mu, p, Phi, amp, dt, XI, f, G, p1, p2, rho2, cs, nref):
        for s in range(XI.shape[0]):
            nref[0] += step(x, mu, p, Phi, amp, dt, XI[s], f, G)
            if not finite(x):
                return s
            _scan(x, p1, p2, rho2, cs)
        return XI.shape[0]

    @deco
    def run_exit(x, mu, p, Phi, amp, dt, XI, f, G, target, r2, nref):
        # returns the step index (within the chunk) of the first arrival, -1 if none,
        # or -2 - s on blow-up at step s
        for s in range(XI.shape[0]):
            nref[0] += step(x, mu, p, Phi, amp, dt, XI[s], f, G)
            if not finite(x):
                return -2 - s
            d = 0.0
            for i in range(x.shape[0]):
                e = x[i] - target[i]
                d += e * e
            if d <= r2:
                return s
        return -1

    return {"record": run_record, "passages": run_passages, "exit": run_exit}


_KERNEL_CACHE = {}


def _py_factor(M):
    M = 0.5 * (M + M.T)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(M)
        return V * np.sqrt(np.clip(w, 0.0, None))


def _setup(system, noise, mu, x0):
    """Resolve kernels, parameters and the constant noise factor for a run."""
    if not isinstance(noise, NoiseSpec):
        noise = NoiseSpec(float(noise), "additive-constant" if system.additive else "state-dependent")
    if (noise.mode == "additive-constant") != bool(system.additive):
        raise PreconditionError(
            f"noise mode {noise.mode!r} does not match the {system.name} noise structure"
        )
    x0 = np.atleast_1d(np.array(x0, dtype=float))
    if x0.size != system.dim_state:
        raise ValueError(f"initial state needs {system.dim_state} components")
    n = system.dim_state
    kern = system.kernels
    if system.additive:
        Phi = np.atleast_2d(np.asarray(system.diffusion(x0, mu), dtype=float))
        k = Phi.shape[1]
    else:
        Phi = np.zeros((n, 1))
        k = system.dim_noise
    if kern is not None and (system.additive or kern.noise is not None):
        key = (id(kern.drift), id(kern.noise) if not system.additive else None, bool(kern.reflect))
        fns = _KERNEL_CACHE.get(key)
        if fns is None:
            fns = _make_kernels(kern.drift, None if system.additive else kern.noise,
                                bool(kern.reflect), jit=True)
            _KERNEL_CACHE[key] = fns
        params = np.asarray(kern.params, dtype=float)
    else:
        def drift_cb(x, m, p, out):
            out[:] = system.drift(x, m)

        def noise_cb(x, m, p, out):
            if system.diffusion is not None:
                out[:, :] = system.diffusion(x, m)
            else:
                out[:, :] = _py_factor(noise_covariance(system, x, m))

        fns = _make_kernels(drift_cb, None if system.additive else noise_cb,
                            bool(system.nonnegative), jit=False)
        params = np.zeros(1)
    return noise, fns, params, np.ascontiguousarray(Phi), k, x0


def _initial(system, config, x0):
    if x0 is None:
        x0 = config.initial_state
    if x0 is None:
        raise ValueError("an initial state is required")
    return x0


def euler_maruyama(system, noise, config, mu, x0=None, path_index=0, record_every=1):
    """Simulate one path and return it, decimated to every ``record_every`` steps.

    A non-finite state truncates the path; ``blowup`` is then set and the
    recorded samples end at the last finite state.
    """
    x0 = _initial(system, config, x0)
    noise, fns, params, Phi, k, x = _setup(system, noise, mu, x0)
    n = x.size
    N = config.n_steps
    every = max(1, int(record_every))
    rec = np.empty((N // every + 1, n))
    rec[0] = x
    rng = path_rng(config.rng_seed, path_index)
    amp = noise.sigma * math.sqrt(config.dt)
    f = np.empty(n)
    G = np.zeros((n, k))
    nref = np.zeros(1, dtype=np.int64)
    done = 0
    blow = False
    while done < N:
        m = min(config.chunk, N - done)
        XI = rng.standard_normal((m, k)) if noise.sigma > 0 else np.zeros((m, k))
        took = fns["record"](x, float(mu), params, Phi, amp, config.dt, XI, f, G, rec, every,
                             done, nref)
        done += took
        if took < m:
            blow = True
            break
    rows = done // every + 1
    t = np.arange(rows) * (every * config.dt)
    msg = f"non-finite state after step {done + 1}" if blow else ""
    return SamplePath(t, rec[:rows].copy(), int(nref[0]), blow, msg)


def _one_passage_path(args):
    system, noise, config, mu, x0, p1, p2, index, prepared = args
    noise, fns, params, Phi, k, x = prepared(x0)
    n = x.size
    cs = np.zeros(9, dtype=np.int64)
    rho2 = config.rho ** 2
    _scan(x, p1, p2, rho2, cs)
    rng = path_rng(config.rng_seed, index)
    amp = noise.sigma * math.sqrt(config.dt)
    f = np.empty(n)
    G = np.zeros((n, k))
    nref = np.zeros(1, dtype=np.int64)
    N = config.n_steps
    done = 0
    if noise.sigma == 0.0:
        zeros = np.zeros((min(config.chunk, N), k))
    while done < N:
        m = min(config.chunk, N - done)
        XI = rng.standard_normal((m, k)) if noise.sigma > 0 else zeros[:m]
        took = fns["passages"](x, float(mu), params, Phi, amp, config.dt, XI, f, G, p1, p2, rho2,
                               cs, nref)
        done += took
        if took < m:
            return _counts(cs), int(nref[0]), True
    return _counts(cs), int(nref[0]), False


def _map(fn, items, workers):
    if workers is None or workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(fn, items))


def simulate_passages(system, noise, config, mu, p1, p2, x0=None, workers=1):
    """Passage statistics over ``config.n_paths`` independent paths.

    Paths start at ``x0`` (default ``config.initial_state``, else ``p1``).
    """
    p1, p2 = _check_balls(p1, p2, config.rho)
    if x0 is None:
        x0 = config.initial_state if config.initial_state is not None else p1
    prepared_once = _setup(system, noise, mu, x0)

    def prepared(x_start):
        noise_, fns, params, Phi, k, _ = prepared_once
        return noise_, fns, params, Phi, k, np.atleast_1d(np.array(x_start, dtype=float))

    items = [(system, noise, config, mu, x0, p1, p2, i, prepared) for i in range(config.n_paths)]
    out = _map(_one_passage_path, items, workers)
    counts = tuple(c for c, _, _ in out)
    totals = np.array([c.total for c in counts], dtype=float)
    raw = np.array([c.raw_total for c in counts], dtype=float)
    n = totals.size
    stderr = float(totals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return PassageStats(
        mean=float(totals.mean()),
        stderr=stderr,
        raw_mean=float(raw.mean()),
        counts=counts,
        reflections=int(sum(r for _, r, _ in out)),
        blowups=int(sum(b for _, _, b in out)),
    )


def mean_passages(system, noise, config, mu, p1, p2, x0=None, workers=1):
    """Ensemble mean of ``T^{1->2} + T^{2->1}`` and its standard error."""
    stats = simulate_passages(system, noise, config, mu, p1, p2, x0=x0, workers=workers)
    return stats.mean, stats.stderr


def first_passage_times(system, noise, config, mu, x0, target, radius, workers=1):
    """Times of first arrival in the closed ball ``|x - target| <= radius``.

    Returns an array of ``config.n_paths`` times; ``nan`` marks paths that
    did not arrive before ``t_max`` (or blew up).
    """
    target = np.atleast_1d(np.asarray(target, dtype=float))
    noise, fns, params, Phi, k, x_init = _setup(system, noise, mu, x0)
    r2 = float(radius) ** 2
    amp = noise.sigma * math.sqrt(config.dt)
    N = config.n_steps
    n = x_init.size

    def one(index):
        x = x_init.copy()
        if float(((x - target) ** 2).sum()) <= r2:
            return 0.0
        rng = path_rng(config.rng_seed, index)
        f = np.empty(n)
        G = np.zeros((n, k))
        nref = np.zeros(1, dtype=np.int64)
        done = 0
        chunk = min(config.chunk, 1 << 14)
        while done < N:
            m = min(chunk, N - done)
            XI = rng.standard_normal((m, k)) if noise.sigma > 0 else np.zeros((m, k))
            s = fns["exit"](x, float(mu), params, Phi, amp, config.dt, XI, f, G, target, r2, nref)
            if s >= 0:
                return (done + s + 1) * config.dt
            if s <= -2:
                return np.nan
            done += m
        return np.nan

    return np.array(_map(one, range(config.n_paths), workers), dtype=float)
