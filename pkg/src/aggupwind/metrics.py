"""Exact 1D Wasserstein distances, error curves and convergence rates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Quantile, quantile_from_atoms
from .potential import atoms_of


class MetricsError(ValueError):
    pass


def _as_quantile(mu) -> Quantile:
    if isinstance(mu, Quantile):
        q = mu
    else:
        pos, mass = atoms_of(mu)
        if pos.shape[1] != 1:
            raise MetricsError("only one-dimensional measures are supported")
        q = quantile_from_atoms(pos[:, 0], mass)
    if len(q.cum) == 0 or abs(q.cum[-1] - 1.0) > 1e-10:
        raise MetricsError(f"measure has total mass {q.cum[-1] if len(q.cum) else 0.0!r}, expected 1")
    return q


def _quantile_gaps(mu, nu):
    """Interval lengths and quantile differences on the merged staircase."""
    qa, qb = _as_quantile(mu), _as_quantile(nu)
    cuts = np.union1d(qa.cum[:-1], qb.cum[:-1])
    cuts = cuts[(cuts > 0) & (cuts < 1)]
    edges = np.concatenate([[0.0], cuts, [1.0]])
    lengths = np.diff(edges)
    left = edges[:-1]
    diff = qa(left) - qb(left)
    return lengths, diff


def wasserstein2_1d(mu, nu) -> float:
    """``(int_0^1 |Q_mu - Q_nu|^2 dz)^(1/2)`` for atomic probability measures."""
    lengths, diff = _quantile_gaps(mu, nu)
    return math.sqrt(math.fsum(lengths * diff * diff))


def wasserstein1_1d(mu, nu) -> float:
    """``int_0^1 |Q_mu - Q_nu| dz`` for atomic probability measures."""
    lengths, diff = _quantile_gaps(mu, nu)
    return math.fsum(lengths * np.abs(diff))


@dataclass
class ErrorCurve:
    n: np.ndarray
    t: np.ndarray
    e: np.ndarray

    @property
    def e_max(self) -> float:
        return float(self.e.max())


def error_vs_reference(run, ref: Callable, which: str = "W2") -> ErrorCurve:
    """Distance between every stored state of ``run`` and ``ref(t)``.

    ``run`` must have been produced with ``keep_states=True``.
    """
    dist = {"W2": wasserstein2_1d, "W1": wasserstein1_1d}.get(which)
    if dist is None:
        raise MetricsError(f"unknown distance {which!r}")
    if len(run.states) != len(run.rows):
        raise MetricsError("run does not hold every state; rerun with keep_states=True")
    if run.states and run.states[0].grid.d != 1:
        raise MetricsError("error curves are only available in dimension 1")
    n = np.array([r["n"] for r in run.rows])
    t = np.array([r["t"] for r in run.rows])
    e = np.array([dist(m, ref(tt)) for m, tt in zip(run.states, t)])
    return ErrorCurve(n, t, e)


@dataclass
class RateFit:
    points: np.ndarray
    slope: float
    intercept: float
    residual: float

    def summary(self) -> str:
        return f"slope={self.slope:.6g} residual={self.residual:.3g}"


def fit_rate(pairs) -> RateFit:
    """Least-squares slope of ``log e`` against ``log dx``."""
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[0] < 3:
        raise MetricsError("at least three refinement levels are required")
    if np.any(pairs <= 0):
        raise MetricsError("step sizes and errors must be positive")
    pts = np.log(pairs)
    slope, intercept = np.polyfit(pts[:, 0], pts[:, 1], 1)
    res = pts[:, 1] - (slope * pts[:, 0] + intercept)
    return RateFit(pts, float(slope), float(intercept), float(np.sqrt(np.mean(res ** 2))))
