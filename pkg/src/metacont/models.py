"""Parameterized SDE systems ``dx = f(x; mu) dt + sigma F(x; mu) dW``.

Three built-in systems are provided under fixed identifiers:

``pitchfork``
    ``dx = (mu x - x^3) dt + sigma dW`` with potential
    ``U(x) = -mu x^2 / 2 + x^4 / 4``.
``neural2``
    Fast subsystem of a two-population competition model with sigmoid gain;
    the parameter is the input strength ``I_c``.
``rosenzweig-macarthur``
    Predator-prey system with demographic (system-size) noise covariance
    ``B(x, y)``; the parameter is the carrying capacity ``gamma``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import DomainError

__all__ = [
    "SdeSystem",
    "NoiseSpec",
    "SimKernels",
    "eval_drift",
    "eval_jacobian",
    "eval_dmu",
    "fd_jacobian",
    "noise_covariance",
    "sigmoid_gain",
    "neural_drift",
    "neural_jacobian",
    "rm_drift",
    "rm_jacobian",
    "rm_noise_matrix",
    "pitchfork",
    "neural2",
    "rosenzweig_macarthur",
    "get_model",
    "with_constant_noise",
    "BUILTIN_MODELS",
    "NEURAL_DEFAULTS",
]

_SQRT_EPS = np.sqrt(np.finfo(float).eps)

NEURAL_DEFAULTS = {"beta": 1.1, "g": 0.5, "r": 10.0, "theta": 0.2, "y1": 0.7, "y2": 0.75}
#: noise shape F F^T used with the neural model
NEURAL_NOISE_SHAPE = np.array([[1.0, 0.4], [0.4, 1.0]])


@dataclass(frozen=True)
class SimKernels:
    """Compiled callbacks used by the Euler-Maruyama kernels.

    ``drift(x, mu, p, out)`` writes ``f(x; mu)`` into ``out``;
    ``noise(x, mu, p, out)`` writes the ``n x k`` factor ``Phi(x; mu)``.
    ``noise`` is ``None`` for constant (additive) noise, in which case the
    simulator uses the system's constant diffusion matrix.
    """

    drift: Callable
    params: np.ndarray
    noise: Optional[Callable] = None
    reflect: bool = False


@dataclass(frozen=True)
class SdeSystem:
    """A parameterized SDE system.

    Either ``diffusion`` (the factor ``F``) or ``noise_cov`` (the matrix
    ``F F^T``) must be given. ``jacobian``, ``dmu`` and ``potential`` are
    optional analytic extras; finite differences replace the first two when
    absent.
    """

    name: str
    dim_state: int
    dim_noise: int
    drift: Callable
    diffusion: Optional[Callable] = None
    noise_cov: Optional[Callable] = None
    jacobian: Optional[Callable] = None
    dmu: Optional[Callable] = None
    potential: Optional[Callable] = None
    parameter_name: str = "mu"
    state_names: tuple = ()
    additive: bool = True
    nonnegative: bool = False
    params: dict = field(default_factory=dict)
    kernels: Optional[SimKernels] = None

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_noise < 1:
            raise ValueError("dimensions must be positive")
        if self.diffusion is None and self.noise_cov is None:
            raise ValueError("either diffusion or noise_cov is required")
        if not self.state_names:
            names = tuple(f"x_{i + 1}" for i in range(self.dim_state))
            object.__setattr__(self, "state_names", names)

    @property
    def is_gradient(self):
        return self.potential is not None


@dataclass(frozen=True)
class NoiseSpec:
    """Noise level and structure of a simulation or covariance computation."""

    sigma: float
    mode: str = "additive-constant"

    def __post_init__(self):
        if not (self.sigma >= 0.0):
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.mode not in ("additive-constant", "state-dependent"):
            raise ValueError(f"unknown noise mode {self.mode!r}")

    @classmethod
    def for_system(cls, system, sigma):
        return cls(sigma, "additive-constant" if system.additive else "state-dependent")


def _check_domain(system, x):
    if system.nonnegative and np.any(x < 0):
        idx = int(np.flatnonzero(x < 0)[0])
        raise DomainError(
            f"{system.name}: state component {system.state_names[idx]} = {x[idx]} "
            "is negative"
        )


def eval_drift(system, x, mu):
    """Evaluate ``f(x; mu)``; raises DomainError on non-finite output."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_domain(system, x)
    f = np.atleast_1d(np.asarray(system.drift(x, mu), dtype=float))
    bad = ~np.isfinite(f)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise DomainError(
            f"{system.name}: drift component {idx + 1} is {f[idx]} at x={x.tolist()}, "
            f"{system.parameter_name}={mu}"
        )
    return f


def fd_jacobian(fun, x, mu):
    """Central-difference Jacobian with steps ``sqrt(eps) * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    J = np.empty((np.atleast_1d(fun(x, mu)).size, n))
    for i in range(n):
        h = _SQRT_EPS * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (np.atleast_1d(fun(xp, mu)) - np.atleast_1d(fun(xm, mu))) / (xp[i] - xm[i])
    return J


def eval_jacobian(system, x, mu):
    """``A(x; mu) = D_x f``: analytic when supplied, central differences otherwise."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if system.jacobian is not None:
        return np.atleast_2d(np.asarray(system.jacobian(x, mu), dtype=float))
    return fd_jacobian(system.drift, x, mu)


def eval_dmu(system, x, mu):
    """Parameter derivative ``D_mu f(x; mu)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if system.dmu is not None:
        return np.atleast_1d(np.asarray(system.dmu(x, mu), dtype=float))
    h = _SQRT_EPS * max(1.0, abs(mu))
    fp = np.atleast_1d(system.drift(x, mu + h))
    fm = np.atleast_1d(system.drift(x, mu - h))
    return (fp - fm) / ((mu + h) - (mu - h))


def noise_covariance(system, x, mu):
    """The matrix ``F F^T`` at ``(x, mu)`` (without the ``sigma^2`` factor)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if system.noise_cov is not None:
        return np.atleast_2d(np.asarray(system.noise_cov(x, mu), dtype=float))
    F = np.atleast_2d(np.asarray(system.diffusion(x, mu), dtype=float))
    return F @ F.T


def with_constant_noise(system, F=None, shape=None):
    """Return a copy of ``system`` with constant additive noise.

    Give either the factor ``F`` or the PSD ``shape = F F^T``; a shape is
    factored by Cholesky (eigendecomposition fallback for singular shapes).
    """
    if (F is None) == (shape is None):
        raise ValueError("give exactly one of F or shape")
    if F is None:
        shape = np.atleast_2d(np.asarray(shape, dtype=float))
        try:
            F = np.linalg.cholesky(shape)
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(0.5 * (shape + shape.T))
            F = V * np.sqrt(np.clip(w, 0.0, None))
    F = np.atleast_2d(np.asarray(F, dtype=float)).copy()
    if F.shape[0] != system.dim_state:
        raise ValueError(f"noise factor needs {system.dim_state} rows, got {F.shape[0]}")
    F.setflags(write=False)
    kernels = system.kernels
    if kernels is not None:
        kernels = dataclasses.replace(kernels, noise=None)
    return dataclasses.replace(
        system,
        diffusion=lambda x, mu: F,
        noise_cov=None,
        dim_noise=F.shape[1],
        additive=True,
        kernels=kernels,
    )


# ----------------------------------------------------------------------------
# pitchfork


def pitchfork():
    """Pitchfork normal form ``f = mu x - x^3`` with unit additive noise."""
    one = np.ones((1, 1))
    one.setflags(write=False)
    return SdeSystem(
        name="pitchfork",
        dim_state=1,
        dim_noise=1,
        drift=lambda x, mu: mu * x - x * x * x,
        diffusion=lambda x, mu: one,
        jacobian=lambda x, mu: np.array([[mu - 3.0 * x[0] ** 2]]),
        dmu=lambda x, mu: np.array([x[0]]),
        potential=lambda x, mu: float(-0.5 * mu * x[0] ** 2 + 0.25 * x[0] ** 4),
        parameter_name="mu",
        state_names=("x",),
        kernels=SimKernels(drift=_kernels.pitchfork_drift, params=np.zeros(1)),
    )


# ----------------------------------------------------------------------------
# neural competition


def sigmoid_gain(u, r, theta):
    """Logistic gain ``1 / (1 + exp(-r (u - theta)))``, overflow-safe."""
    z = r * (np.asarray(u, dtype=float) - theta)
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def _neural_inputs(x, mu, p):
    u1 = mu - p["beta"] * x[1] - p["g"] * p["y1"]
    u2 = mu - p["beta"] * x[0] - p["g"] * p["y2"]
    return u1, u2


def neural_drift(x, mu, **params):
    """Drift of the fast neural subsystem at input strength ``mu = I_c``."""
    p = {**NEURAL_DEFAULTS, **params}
    u1, u2 = _neural_inputs(x, mu, p)
    return np.array([
        -x[0] + sigmoid_gain(u1, p["r"], p["theta"]),
        -x[1] + sigmoid_gain(u2, p["r"], p["theta"]),
    ])


def neural_jacobian(x, mu, **params):
    p = {**NEURAL_DEFAULTS, **params}
    u1, u2 = _neural_inputs(x, mu, p)
    s1 = sigmoid_gain(u1, p["r"], p["theta"])
    s2 = sigmoid_gain(u2, p["r"], p["theta"])
    d1 = p["r"] * s1 * (1.0 - s1)
    d2 = p["r"] * s2 * (1.0 - s2)
    return np.array([[-1.0, -p["beta"] * d1], [-p["beta"] * d2, -1.0]])


def _neural_dmu(x, mu, **params):
    p = {**NEURAL_DEFAULTS, **params}
    u1, u2 = _neural_inputs(x, mu, p)
    s1 = sigmoid_gain(u1, p["r"], p["theta"])
    s2 = sigmoid_gain(u2, p["r"], p["theta"])
    return np.array([p["r"] * s1 * (1.0 - s1), p["r"] * s2 * (1.0 - s2)])


def neural2(noise_shape=None, **params):
    """Neural competition fast subsystem in the input strength ``I_c``.

    Parameters default to ``beta=1.1, g=0.5, r=10, theta=0.2, y1=0.7,
    y2=0.75``; the additive noise has ``F F^T = [[1, 0.4], [0.4, 1]]``
    unless ``noise_shape`` overrides it.
    """
    unknown = set(params) - set(NEURAL_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown neural2 parameters: {sorted(unknown)}")
    p = {**NEURAL_DEFAULTS, **params}
    vec = np.array([p[k] for k in ("beta", "g", "r", "theta", "y1", "y2")])
    system = SdeSystem(
        name="neural2",
        dim_state=2,
        dim_noise=2,
        drift=lambda x, mu: neural_drift(x, mu, **p),
        diffusion=lambda x, mu: np.eye(2),
        jacobian=lambda x, mu: neural_jacobian(x, mu, **p),
        dmu=lambda x, mu: _neural_dmu(x, mu, **p),
        parameter_name="I_c",
        state_names=("x_1", "x_2"),
        params=p,
        kernels=SimKernels(drift=_kernels.neural_drift, params=vec),
    )
    shape = NEURAL_NOISE_SHAPE if noise_shape is None else noise_shape
    return with_constant_noise(system, shape=shape)


# ----------------------------------------------------------------------------
# Rosenzweig-MacArthur


def _rm_check(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"rosenzweig-macarthur: negative population {x.tolist()}")
    return x


def rm_drift(x, mu, beta=3.0, m=1.0):
    """Predator-prey drift at carrying capacity ``mu = gamma``.

    Uses ``x' = x (1 - x/gamma) - x y / (1 + x)``,
    ``y' = beta x y / (1 + x) - m y``.
    """
    x0, y0 = _rm_check(x)
    inter = x0 * y0 / (1.0 + x0)
    return np.array([x0 * (1.0 - x0 / mu) - inter, beta * inter - m * y0])


def rm_jacobian(x, mu, beta=3.0, m=1.0):
    x0, y0 = _rm_check(x)
    q = 1.0 + x0
    return np.array([
        [1.0 - 2.0 * x0 / mu - y0 / q ** 2, -x0 / q],
        [beta * y0 / q ** 2, beta * x0 / q - m],
    ])


def rm_noise_matrix(x, mu, beta=3.0, m=1.0):
    """Demographic noise covariance ``B(x, y)`` (exactly symmetric)."""
    x0, y0 = _rm_check(x)
    inter = x0 * y0 / (1.0 + x0)
    off = -inter
    return np.array([
        [x0 * (1.0 + inter - x0 / mu), off],
        [off, y0 * (beta * x0 / (1.0 + x0) + m)],
    ])


def rosenzweig_macarthur(beta=3.0, m=1.0):
    """Rosenzweig-MacArthur model in the carrying capacity ``gamma``."""
    return SdeSystem(
        name="rosenzweig-macarthur",
        dim_state=2,
        dim_noise=2,
        drift=lambda x, mu: rm_drift(x, mu, beta, m),
        noise_cov=lambda x, mu: rm_noise_matrix(x, mu, beta, m),
        jacobian=lambda x, mu: rm_jacobian(x, mu, beta, m),
        dmu=lambda x, mu: np.array([(x[0] / mu) ** 2, 0.0]),
        parameter_name="gamma",
        state_names=("x", "y"),
        additive=False,
        nonnegative=True,
        params={"beta": beta, "m": m},
        kernels=SimKernels(
            drift=_kernels.rm_drift,
            noise=_kernels.rm_noise_factor,
            params=np.array([beta, m]),
            reflect=True,
        ),
    )


BUILTIN_MODELS = {
    "pitchfork": pitchfork,
    "neural2": neural2,
    "rosenzweig-macarthur": rosenzweig_macarthur,
}


def get_model(name, **params):
    """Instantiate a built-in model by identifier."""
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; built-ins are {sorted(BUILTIN_MODELS)}"
        ) from None
    return factory(**params)
