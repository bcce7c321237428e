import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numba import njit

from metacont.errors import PreconditionError
from metacont.models import NoiseSpec, SdeSystem, SimKernels, get_model
from metacont.sdesim import (
    SamplePath,
    SimulationConfig,
    count_passages,
    euler_maruyama,
    first_passage_times,
    mean_passages,
    path_rng,
    simulate_passages,
)


@njit(cache=True)
def _ou_drift(x, mu, p, out):
    out[0] = mu * x[0]


def _ou():
    one = np.ones((1, 1))
    return SdeSystem(
        name="ou", dim_state=1, dim_noise=1,
        drift=lambda x, mu: mu * x,
        diffusion=lambda x, mu: one,
        kernels=SimKernels(drift=_ou_drift, params=np.zeros(1)),
    )


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(dt=1.0, t_max=1.0)
    with pytest.raises(ValueError):
        SimulationConfig(rho=0.0)
    with pytest.raises(ValueError):
        SimulationConfig(n_paths=0)
    with pytest.raises(ValueError):
        SimulationConfig(rng_seed=-1)
    assert SimulationConfig(dt=1e-3, t_max=2.0).n_steps == 2000


def test_path_streams_are_independent_and_reproducible():
    a = path_rng(7, 0).standard_normal(5)
    assert np.array_equal(a, path_rng(7, 0).standard_normal(5))
    assert not np.array_equal(a, path_rng(7, 1).standard_normal(5))
    assert not np.array_equal(a, path_rng(8, 0).standard_normal(5))


def test_reproducible_and_chunk_invariant():
    sys_ = get_model("pitchfork")
    cfg = SimulationConfig(dt=1e-3, t_max=3.0, rng_seed=11)
    p1 = euler_maruyama(sys_, NoiseSpec(0.5), cfg, 1.0, x0=[1.0], path_index=3)
    p2 = euler_maruyama(sys_, NoiseSpec(0.5), cfg, 1.0, x0=[1.0], path_index=3)
    small = SimulationConfig(dt=1e-3, t_max=3.0, rng_seed=11, chunk=37)
    p3 = euler_maruyama(sys_, NoiseSpec(0.5), small, 1.0, x0=[1.0], path_index=3)
    assert p1.x.tobytes() == p2.x.tobytes() == p3.x.tobytes()
    other = euler_maruyama(sys_, NoiseSpec(0.5), cfg, 1.0, x0=[1.0], path_index=4)
    assert not np.array_equal(p1.x, other.x)


def test_zero_noise_is_explicit_euler():
    sys_ = get_model("pitchfork")
    cfg = SimulationConfig(dt=1e-2, t_max=5.0)
    path = euler_maruyama(sys_, NoiseSpec(0.0), cfg, 0.7, x0=[0.1])
    x = 0.1
    ref = [x]
    for _ in range(cfg.n_steps):
        x = x + (0.7 * x - x * x * x) * cfg.dt
        ref.append(x)
    assert path.x[:, 0].tobytes() == np.array(ref).tobytes()
    # the equilibrium x=1 at mu=1 is a fixed point of the scheme
    still = euler_maruyama(sys_, NoiseSpec(0.0), cfg, 1.0, x0=[1.0])
    assert np.all(still.x == 1.0)


def test_decimation_matches_full_record():
    sys_ = get_model("pitchfork")
    cfg = SimulationConfig(dt=1e-3, t_max=1.0, rng_seed=2)
    full = euler_maruyama(sys_, NoiseSpec(0.5), cfg, 1.0, x0=[1.0])
    dec = euler_maruyama(sys_, NoiseSpec(0.5), cfg, 1.0, x0=[1.0], record_every=10)
    assert np.array_equal(dec.x, full.x[::10])
    assert np.allclose(dec.t, full.t[::10])


def test_ou_variance_matches_closed_form():
    # dX = -X dt + 0.5 dW has stationary variance 0.5**2 / 2 = 0.125
    sys_ = _ou()
    n = 10_000
    cfg = SimulationConfig(dt=1e-3, t_max=5.0, rng_seed=5)
    xs = np.array([euler_maruyama(sys_, NoiseSpec(0.5), cfg, -1.0, x0=[0.0], path_index=i,
                                  record_every=cfg.n_steps).x[-1, 0] for i in range(n)])
    var = xs.var(ddof=1)
    se = var * np.sqrt(2.0 / (n - 1))
    assert abs(var - 0.125) < 3 * se
    assert abs(var - 0.125) < 0.05 * 0.125


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_truncates():
    sys_ = SdeSystem(name="cubic", dim_state=1, dim_noise=1, drift=lambda x, mu: x ** 3,
                     diffusion=lambda x, mu: np.ones((1, 1)))
    cfg = SimulationConfig(dt=0.1, t_max=10.0)
    path = euler_maruyama(sys_, NoiseSpec(0.0), cfg, 0.0, x0=[3.0])
    assert path.blowup and "non-finite" in path.message
    assert np.all(np.isfinite(path.x))
    assert path.x.shape[0] == path.t.size < cfg.n_steps + 1


def test_synthetic_passages():
    p1, p2 = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    far = np.array([0.5, 3.0])
    path = np.array([p1, far, p2, far, p1, far, p2, p2, far])
    c = count_passages(path, p1, p2, 0.1)
    assert (c.t_1to2, c.t_2to1) == (2, 1)
    # repeated entries into ball 1 re-arm once for the alternating count,
    # but each pairs with the next entry into ball 2 for the raw count
    rep = np.array([p1, far, p1, far, p2])
    c = count_passages(rep, p1, p2, 0.1)
    assert (c.t_1to2, c.raw_1to2) == (1, 2)
    assert count_passages(np.tile(far, (10, 1)), p1, p2, 0.1).total == 0
    sp = SamplePath(np.arange(path.shape[0]), path)
    assert count_passages(sp, p1, p2, 0.1) == count_passages(path, p1, p2, 0.1)


def test_overlapping_balls_rejected():
    with pytest.raises(PreconditionError):
        count_passages(np.zeros((3, 1)), [0.0], [0.05], 0.05)
    sys_ = get_model("pitchfork")
    with pytest.raises(PreconditionError):
        simulate_passages(sys_, NoiseSpec(0.5), SimulationConfig(t_max=1.0, n_paths=2, rho=1.0),
                          1.0, [-1.0], [1.0])


@settings(max_examples=30)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=40), st.integers(1, 4))
def test_passage_counts_invariant_under_refinement(labels, reps):
    # states: 0 = outside, 1 = ball one, 2 = ball two; repeating samples does
    # not change the order of entries
    pts = {0: [0.5, 2.0], 1: [0.0, 0.0], 2: [1.0, 0.0]}
    path = np.array([pts[k] for k in labels])
    fine = np.repeat(path, reps, axis=0)
    a = count_passages(path, pts[1], pts[2], 0.1)
    b = count_passages(fine, pts[1], pts[2], 0.1)
    assert a == b
    assert a.t_1to2 >= 0 and a.t_2to1 >= 0
    assert abs(a.t_1to2 - a.t_2to1) <= 1


def test_zero_noise_gives_no_passages():
    sys_ = get_model("pitchfork")
    cfg = SimulationConfig(t_max=10.0, n_paths=4)
    mean, se = mean_passages(sys_, NoiseSpec(0.0), cfg, 1.0, [-1.0], [1.0])
    assert mean == 0.0 and se == 0.0


def test_pitchfork_strong_separation_no_switching():
    sys_ = get_model("pitchfork")
    root = np.sqrt(2.5)
    cfg = SimulationConfig(t_max=1000.0, n_paths=10, rng_seed=3)
    stats = simulate_passages(sys_, NoiseSpec(0.5), cfg, 2.5, [-root], [root])
    assert stats.mean == 0.0
    assert stats.blowups == 0 and len(stats.counts) == 10


def test_pitchfork_weak_separation_switches():
    sys_ = get_model("pitchfork")
    root = np.sqrt(0.5)
    cfg = SimulationConfig(t_max=200.0, n_paths=4, rng_seed=3)
    assert simulate_passages(sys_, NoiseSpec(0.5), cfg, 0.5, [-root], [root]).mean > 1.0


def test_ensemble_independent_of_workers():
    sys_ = get_model("pitchfork")
    cfg = SimulationConfig(t_max=50.0, n_paths=6, rng_seed=9)
    a = simulate_passages(sys_, NoiseSpec(0.5), cfg, 0.5, [-0.7071], [0.7071], workers=1)
    b = simulate_passages(sys_, NoiseSpec(0.5), cfg, 0.5, [-0.7071], [0.7071], workers=3)
    assert a.counts == b.counts and a.mean == b.mean


def test_first_passage_times():
    sys_ = get_model("pitchfork")
    cfg = SimulationConfig(t_max=5.0, n_paths=3)
    # deterministic relaxation from 0.5 towards 1 reaches the ball
    t = first_passage_times(sys_, NoiseSpec(0.0), cfg, 1.0, [0.5], [1.0], 0.01)
    assert np.all(np.isfinite(t)) and np.all(t == t[0]) and t[0] > 0
    assert np.all(first_passage_times(sys_, NoiseSpec(0.0), cfg, 1.0, [1.0], [1.0], 0.01) == 0.0)
    never = first_passage_times(sys_, NoiseSpec(0.0), cfg, 1.0, [0.5], [-1.0], 0.01)
    assert np.all(np.isnan(never))


def test_noise_mode_must_match_system():
    with pytest.raises(PreconditionError):
        euler_maruyama(get_model("pitchfork"), NoiseSpec(0.1, "state-dependent"),
                       SimulationConfig(t_max=1.0), 1.0, x0=[1.0])


def test_rm_paths_stay_nonnegative():
    sys_ = get_model("rosenzweig-macarthur")
    cfg = SimulationConfig(dt=1e-3, t_max=20.0, rng_seed=1)
    path = euler_maruyama(sys_, NoiseSpec.for_system(sys_, 0.3), cfg, 1.5, x0=[0.05, 0.05])
    assert np.all(path.x >= 0.0) and not path.blowup
