"""Static figures of run results (matplotlib, Agg backend, PNG files).

Figures are opt-in; the data files are the primary output.  PNG metadata
is suppressed so repeated renders of the same data are identical.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "plot_branches",
    "plot_ellipsoids",
    "plot_distance",
    "plot_passages",
    "plot_kramers",
]

_COLORS = {"stable": "tab:blue", "saddle": "tab:green", "unstable": "tab:red", "marginal": "k"}
_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def _segments(points):
    """Split a point list into runs of constant stability label."""
    runs, cur = [], [points[0]]
    for p in points[1:]:
        if p.stability == cur[-1].stability:
            cur.append(p)
        else:
            runs.append(cur)
            cur = [cur[-1], p]
    runs.append(cur)
    return runs


def plot_branches(branches, path, component=0, parameter="mu", state="x"):
    """Bifurcation diagram: ``x_component`` against the parameter."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, br in branches.items():
        if not br.points:
            continue
        for run in _segments(br.points):
            label = run[-1].stability
            ax.plot([p.mu for p in run], [p.x_star[component] for p in run],
                    color=_COLORS[label], lw=2.0 if label == "stable" else 1.0)
        for ev in br.events:
            ax.plot(ev.mu, ev.x[component], "ko", ms=4)
            ax.annotate(ev.kind[0].upper(), (ev.mu, ev.x[component]), textcoords="offset points",
                        xytext=(4, 4), fontsize=8)
    ax.set_xlabel(parameter)
    ax.set_ylabel(state)
    fig.tight_layout()
    return _save(fig, path)


def plot_ellipsoids(branch_data, path, every=100, parameter="mu"):
    """Phase-plane neighbourhoods (2-D) or parameter tubes ``x +- half-width`` (1-D)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, (points, ellipsoids) in branch_data.items():
        pairs = [(p, e) for p, e in zip(points, ellipsoids) if e is not None]
        if not pairs:
            continue
        if pairs[0][1].dim == 1:
            mu = np.array([p.mu for p, _ in pairs])
            x = np.array([p.x_star[0] for p, _ in pairs])
            w = np.array([e.major_semi_axis for _, e in pairs])
            order = np.argsort(mu)
            ax.fill_between(mu[order], (x - w)[order], (x + w)[order], alpha=0.3)
            ax.plot(mu[order], x[order], lw=1.5)
            ax.set_xlabel(parameter)
        else:
            for p, e in pairs[::every]:
                b = e.boundary()
                ax.plot(np.append(b[:, 0], b[0, 0]), np.append(b[:, 1], b[0, 1]), lw=0.8)
            ax.plot([p.x_star[0] for p, _ in pairs], [p.x_star[1] for p, _ in pairs], "k-", lw=0.6)
            ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    return _save(fig, path)


def plot_distance(mu, delta, path, parameter="mu"):
    fig, ax = plt.subplots(figsize=(6, 3))
    order = np.argsort(mu)
    ax.plot(np.asarray(mu)[order], np.asarray(delta)[order], "b.-", ms=3)
    ax.axhline(0.0, color="k", lw=0.7)
    ax.set_xlabel(parameter)
    ax.set_ylabel("delta")
    fig.tight_layout()
    return _save(fig, path)


def plot_passages(mu, mean, stderr, path, parameter="mu"):
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.errorbar(mu, mean, yerr=stderr, fmt="o", color="0.4", ms=4, capsize=2)
    ax.set_xlabel(parameter)
    ax.set_ylabel("T_p")
    fig.tight_layout()
    return _save(fig, path)


def plot_kramers(rows, path, parameter="mu"):
    """``rows``: mapping ``sigma -> (mu array, expected time array)``."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for sigma, (mu, tau) in sorted(rows.items()):
        ax.semilogy(mu, tau, label=f"sigma={sigma:g}")
    ax.set_xlabel(parameter)
    ax.set_ylabel("E[tau]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
