"""Constraint-violation metrics, ergodic averages and Monte-Carlo bands."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_LEVELS = (25, 50, 75, 90)


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryRecord:
    n: int
    gamma: float
    x: np.ndarray
    lam: np.ndarray
    loads: np.ndarray
    avg_loss: float
    Y: np.ndarray | None = None


def _nonempty(records):
    records = list(records)
    if not records:
        raise ValueError("empty record sequence")
    return records


def cvio(records: Sequence[TrajectoryRecord]) -> np.ndarray:
    """Row n-1 holds CVio_n = sum_{k<n} gamma_k g(X_k) / sum_{k<n} gamma_k,
    per resource. Not clipped."""
    records = _nonempty(records)
    gam = np.array([r.gamma for r in records])
    G = np.array([r.loads for r in records])
    return np.cumsum(gam[:, None] * G, axis=0) / np.cumsum(gam)[:, None]


def ergodic_average(records: Sequence[TrajectoryRecord], weighted: bool = True) -> np.ndarray:
    """Running averages X_bar_n for n = 1..len(records), stacked on axis 0."""
    records = _nonempty(records)
    gam = np.array([r.gamma if weighted else 1.0 for r in records])
    X = np.array([r.x for r in records])
    w = gam.reshape((-1,) + (1,) * (X.ndim - 1))
    return np.cumsum(w * X, axis=0) / np.cumsum(w, axis=0)


def rnccv(loads) -> float:
    """Resource-averaged positive part of the loads."""
    loads = np.asarray(loads, dtype=float)
    return float(np.maximum(loads, 0.0).mean())


def running_mean(values, weights=None) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    w = np.ones(len(values)) if weights is None else np.asarray(weights, dtype=float)
    return np.cumsum(w * values) / np.cumsum(w)


def fenchel_distance_series(records: Sequence[TrajectoryRecord], regs, oracle) -> tuple[np.ndarray, str]:
    """Per-record distance to the oracle point (x*, lam*).

    Uses the extended Fenchel distance when records carry scores, otherwise
    ||X_n - x*||_2 + ||Lambda_n - lam*||_2. Returns the series and its label.
    """
    from .geometry import extended_distance

    if oracle is None:
        raise ValueError("an oracle point (x*, lam*) is required")
    x_star, lam_star = (np.asarray(a, dtype=float) for a in oracle)
    records = _nonempty(records)
    if all(r.Y is not None for r in records):
        vals = [extended_distance(regs, x_star, lam_star, r.Y, r.lam) for r in records]
        return np.asarray(vals), "fenchel"
    vals = [np.linalg.norm(np.asarray(r.x) - x_star) + np.linalg.norm(np.asarray(r.lam) - lam_star) for r in records]
    return np.asarray(vals), "primal_norm"


def percentile_bands(samples, levels: Sequence[float] = DEFAULT_LEVELS) -> dict[str, np.ndarray]:
    """Per-slot sample mean and percentiles (linear interpolation between
    order statistics) of an (n_samples, n_slots) collection."""
    try:
        S = np.asarray(samples, dtype=float)
    except ValueError as e:
        raise ValueError("ragged series: all samples must share one iteration grid") from e
    if S.ndim != 2:
        raise ValueError("ragged series: all samples must share one iteration grid")
    if S.shape[0] < 2:
        raise ValueError("percentile bands need at least two samples")
    out = {"mean": S.mean(axis=0)}
    for lv in levels:
        out[f"p{lv:g}"] = np.percentile(S, lv, axis=0, method="linear")
    return out


def decay_fit(series, iters=None, window: tuple[float, float] | None = None, min_points: int = 10):
    """Least-squares slope of log(value) against log(n) over a window.

    ``iters`` gives the n of each entry (defaults to 1..len). The default window
    is [0.1 * n_max, n_max]. Non-positive values are skipped. Returns
    ``(slope, coverage)`` where coverage is the fraction of in-window points used.
    """
    y = np.asarray(series, dtype=float)
    n = np.arange(1, y.size + 1, dtype=float) if iters is None else np.asarray(iters, dtype=float)
    lo, hi = window if window is not None else (0.1 * n.max(), n.max())
    inside = (n >= lo) & (n <= hi)
    use = inside & (y > 0)
    if use.sum() < min_points:
        raise InsufficientDataError(f"only {int(use.sum())} positive points in window [{lo:g}, {hi:g}]")
    slope, _ = np.polyfit(np.log(n[use]), np.log(y[use]), 1)
    return float(slope), float(use.sum() / max(inside.sum(), 1))
