"""numba-compiled drift and noise callbacks for the built-in models.

Signatures follow :class:`metacont.models.SimKernels`: ``drift(x, mu, p, out)``
and ``noise(x, mu, p, out)``.
"""
import math

from numba import njit


@njit(cache=True, nogil=True)
def pitchfork_drift(x, mu, p, out):
    out[0] = mu * x[0] - x[0] * x[0] * x[0]


@njit(cache=True, nogil=True)
def _logistic(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@njit(cache=True, nogil=True)
def neural_drift(x, mu, p, out):
    # p = (beta, g, r, theta, y1, y2)
    u1 = mu - p[0] * x[1] - p[1] * p[4]
    u2 = mu - p[0] * x[0] - p[1] * p[5]
    out[0] = -x[0] + _logistic(p[2] * (u1 - p[3]))
    out[1] = -x[1] + _logistic(p[2] * (u2 - p[3]))


@njit(cache=True, nogil=True)
def rm_drift(x, mu, p, out):
    # p = (beta, m)
    inter = x[0] * x[1] / (1.0 + x[0])
    out[0] = x[0] * (1.0 - x[0] / mu) - inter
    out[1] = p[0] * inter - p[1] * x[1]


@njit(cache=True, nogil=True)
def sym2_factor(a, b, c, out):
    """Write a factor ``L`` of ``[[a, b], [b, c]]`` with ``L L^T`` equal to it.

    Cholesky when the matrix is numerically positive definite, otherwise the
    eigendecomposition square root with negative eigenvalues clamped to 0.
    """
    if a > 0.0:
        l11 = math.sqrt(a)
        l21 = b / l11
        rest = c - l21 * l21
        if rest >= 0.0:
            out[0, 0] = l11
            out[0, 1] = 0.0
            out[1, 0] = l21
            out[1, 1] = math.sqrt(rest)
            return
    half = 0.5 * (a - c)
    root = math.sqrt(half * half + b * b)
    mid = 0.5 * (a + c)
    w1 = mid + root
    w2 = mid - root
    if b != 0.0:
        v1x = b
        v1y = w1 - a
    elif a >= c:
        v1x = 1.0
        v1y = 0.0
    else:
        v1x = 0.0
        v1y = 1.0
    nrm = math.sqrt(v1x * v1x + v1y * v1y)
    v1x /= nrm
    v1y /= nrm
    s1 = math.sqrt(w1) if w1 > 0.0 else 0.0
    s2 = math.sqrt(w2) if w2 > 0.0 else 0.0
    # second eigenvector is the rotation of the first
    out[0, 0] = v1x * s1
    out[1, 0] = v1y * s1
    out[0, 1] = -v1y * s2
    out[1, 1] = v1x * s2


@njit(cache=True, nogil=True)
def rm_noise_factor(x, mu, p, out):
    inter = x[0] * x[1] / (1.0 + x[0])
    b11 = x[0] * (1.0 + inter - x[0] / mu)
    b22 = x[1] * (p[0] * x[0] / (1.0 + x[0]) + p[1])
    sym2_factor(b11, -inter, b22, out)
