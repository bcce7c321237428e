"""Shared generators for tests."""
import numpy as np


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.normal(size=(n, n)))
    return Q * np.sign(np.diag(R))


def random_hurwitz(rng, n, skew=0.5):
    """``A = -Q diag(d) Q' + skew * median(d) * K`` with ``d ~ U(0.1, 5)``, ``|K|_2 = 1``.

    The symmetric part is ``-Q diag(d) Q'``; by the field-of-values bound
    every eigenvalue has real part in ``[-5, -0.1]``.
    """
    d = rng.uniform(0.1, 5.0, n)
    Q = random_orthogonal(rng, n)
    K = rng.normal(size=(n, n))
    K = K - K.T
    nk = np.linalg.norm(K, 2)
    if nk > 0:
        K /= nk
    return -(Q * d) @ Q.T + skew * np.median(d) * K


def random_psd(rng, n, k=None):
    k = int(rng.integers(1, n + 1)) if k is None else k
    F = rng.normal(size=(n, k))
    return F @ F.T, F


ACCEPTANCE_LINES = []


class criterion:
    """Context manager printing one PASS/FAIL line for an acceptance criterion.

    The line is also collected for the terminal summary (see conftest).
    """

    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def note(self, text):
        self.detail = text

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        line = f"criterion {self.number:>2} {status}: {self.title}"
        if self.detail:
            line += f" ({self.detail})"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return False
