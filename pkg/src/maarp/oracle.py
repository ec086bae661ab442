"""Variational-Nash-equilibrium solver and brute-force verification oracles.

The solver works with exact Euclidean projections only, so it shares no code
path with the mirror maps used by the dynamics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .game import (
    AffineConstraintSpec,
    QuadraticGameSpec,
    check_slater,
    check_strict_monotonicity,
    constraint_eval,
    constraint_gradient_pullback,
    utility_gradient,
)
from .numerics import RngStream


class OracleError(RuntimeError):
    pass


class NonConvergenceError(OracleError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class BoxTooSmallError(OracleError):
    pass


class SamplingError(OracleError):
    pass


@dataclass
class VneSolution:
    x: np.ndarray
    lam: np.ndarray
    residual: float
    iterations: int
    lam_max: float = float("nan")

    def to_json(self) -> str:
        payload = {
            "x": self.x.tolist(),
            "lam": self.lam.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "lam_max": self.lam_max,
        }
        return json.dumps(payload, indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "VneSolution":
        d = json.loads(Path(path).read_text())
        return cls(np.asarray(d["x"]), np.asarray(d["lam"]), d["residual"], d["iterations"], d.get("lam_max", float("nan")))


def _proj_simplex_rows(y: np.ndarray) -> np.ndarray:
    # Pivot rule: the threshold is the first partial-mean t_k = (s_1+..+s_k-1)/k
    # that the next sorted entry does not exceed. Independent of the
    # largest-index rule used by the mirror map.
    s = -np.sort(-y, axis=1)
    t = (np.cumsum(s, axis=1) - 1.0) / np.arange(1, y.shape[1] + 1)
    nxt = np.concatenate([s[:, 1:], np.full((y.shape[0], 1), -np.inf)], axis=1)
    k = np.argmax(nxt <= t, axis=1)
    tau = t[np.arange(y.shape[0]), k]
    return np.maximum(y - tau[:, None], 0.0)


def _ext_field(spec, cspec, x, lam):
    return utility_gradient(spec, x) - constraint_gradient_pullback(cspec, x, lam), constraint_eval(cspec, x)


def _lipschitz_estimate(spec, cspec, stream: RngStream, probes: int = 50) -> float:
    N, D, R = spec.N, spec.D, cspec.R
    best = 0.0
    for _ in range(probes):
        x1 = stream.dirichlet(np.ones(D), size=N)
        x2 = stream.dirichlet(np.ones(D), size=N)
        l1 = stream.uniform(R) * 10.0
        l2 = stream.uniform(R) * 10.0
        a, ga = _ext_field(spec, cspec, x1, l1)
        b, gb = _ext_field(spec, cspec, x2, l2)
        num = np.sqrt(np.sum((a - b) ** 2) + np.sum((ga - gb) ** 2))
        den = np.sqrt(np.sum((x1 - x2) ** 2) + np.sum((l1 - l2) ** 2))
        best = max(best, num / den)
    return best


def _vi_probes(spec, cspec, x_star, stream: RngStream, samples: int):
    """Random joint simplex points plus every single-agent vertex deviation."""
    N, D = spec.N, spec.D
    pts = [stream.dirichlet(np.ones(D), size=N) for _ in range(samples)]
    eye = np.eye(D)
    for i in range(N):
        for k in range(D):
            x = x_star.copy()
            x[i] = eye[k]
            pts.append(x)
    for idx in range(D):
        pts.append(np.tile(eye[idx], (N, 1)))
    return pts


def vi_residual(spec, cspec, x_star, stream: RngStream, samples: int = 10_000, feas_tol: float = 0.0):
    """max <x - x*, v(x*)> over sampled feasible x; -inf if none is feasible."""
    v = utility_gradient(spec, x_star)
    best = -np.inf
    for x in _vi_probes(spec, cspec, x_star, stream, samples):
        if np.all(constraint_eval(cspec, x) <= feas_tol):
            best = max(best, float(np.sum((x - x_star) * v)))
    return best


def solve_vne(
    spec: QuadraticGameSpec,
    cspec: AffineConstraintSpec,
    tol: float = 1e-8,
    max_iters: int = 2_000_000,
    stream: RngStream | None = None,
    x0=None,
    lam_max: float | None = None,
    probes: int = 10_000,
    max_box_doublings: int = 6,
) -> VneSolution:
    """Extragradient on the extended operator over X x [0, lam_max]^R.

    Stops when the natural residual ||z - P(z + t v~(z))|| / t drops below
    ``tol`` and the sampled VI residual is at most ``tol``.
    """
    stream = stream or RngStream(0, 0x0AC1E)
    mono = check_strict_monotonicity(spec)
    if not mono > 0:
        raise OracleError(f"game operator is not strictly monotone (min eigenvalue {mono:.3e})")
    slater = check_slater(spec, cspec)
    if lam_max is None:
        from .game import compute_bound_constants
        from .geometry import Regularizer

        C2 = compute_bound_constants(spec, cspec, Regularizer("euclidean", spec.D), stream, samples=200, vertex_limit=256).C2
        margin = -slater.margin if slater.satisfied else 1.0
        lam_max = 10.0 * max(C2, 1.0) / max(margin, 1e-3)

    L = _lipschitz_estimate(spec, cspec, stream)
    step = min(1e-2, 0.5 / max(L, 1e-12))
    N, D, R = spec.N, spec.D, cspec.R

    for _ in range(max_box_doublings + 1):
        x = np.full((N, D), 1.0 / D) if x0 is None else _proj_simplex_rows(np.asarray(x0, dtype=float).reshape(N, D))
        lam = np.zeros(R)
        residual = np.inf
        it = 0
        while it < max_iters:
            it += 1
            fx, fl = _ext_field(spec, cspec, x, lam)
            xh = _proj_simplex_rows(x + step * fx)
            lh = np.clip(lam + step * fl, 0.0, lam_max)
            # natural residual of the current point
            residual = np.sqrt(np.sum((xh - x) ** 2) + np.sum((lh - lam) ** 2)) / step
            fx, fl = _ext_field(spec, cspec, xh, lh)
            x = _proj_simplex_rows(x + step * fx)
            lam = np.clip(lam + step * fl, 0.0, lam_max)
            if residual < tol:
                break
        if residual >= tol:
            # doubling only helps once the boxed problem is solved
            raise NonConvergenceError(residual, it)
        if np.any(lam >= lam_max * (1 - 1e-12)):
            lam_max *= 2.0
            continue
        break
    else:
        raise BoxTooSmallError(f"prices still hit the box bound {lam_max:g}")

    vi = vi_residual(spec, cspec, x, stream, samples=probes, feas_tol=0.0)
    if vi > tol:
        raise NonConvergenceError(vi, it)
    return VneSolution(x, lam, float(residual), it, float(lam_max))


def brute_simplex_projection(y, resolution: float = 5e-5) -> np.ndarray:
    """Grid minimizer of ||x - y||^2 over barycentric grid points, D in {2, 3}.

    For D = 3 the exhaustive search runs on a coarse grid first and then on
    the fine grid inside a window around the coarse winner (the objective is
    strictly convex, so the winner cannot lie outside it).
    """
    y = np.asarray(y, dtype=float)
    if resolution > 1e-4:
        raise ValueError("resolution must be <= 1e-4")
    D = y.size
    if D == 2:
        t = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
        cost = (t - y[0]) ** 2 + (1.0 - t - y[1]) ** 2
        a = t[np.argmin(cost)]
        return np.array([a, 1.0 - a])
    if D != 3:
        raise NotImplementedError("brute-force projection supports D in {2, 3} only")

    def search(res, lo0, hi0, lo1, hi1):
        a = np.arange(max(lo0, 0.0), min(hi0, 1.0) + res / 2, res)
        b = np.arange(max(lo1, 0.0), min(hi1, 1.0) + res / 2, res)
        A, B = np.meshgrid(a, b, indexing="ij")
        Cc = 1.0 - A - B
        ok = Cc >= -1e-12
        cost = (A - y[0]) ** 2 + (B - y[1]) ** 2 + (np.maximum(Cc, 0.0) - y[2]) ** 2
        cost[~ok] = np.inf
        j = np.unravel_index(np.argmin(cost), cost.shape)
        return A[j], B[j]

    a, b = search(1e-2, 0.0, 1.0, 0.0, 1.0)
    w = 2e-2
    a, b = search(1e-3, a - w, a + w, b - w, b + w)
    w = 2e-3
    # align fine grid to multiples of the resolution
    lo0 = np.floor((a - w) / resolution) * resolution
    lo1 = np.floor((b - w) / resolution) * resolution
    a, b = search(resolution, lo0, a + w, lo1, b + w)
    return np.array([a, b, max(1.0 - a - b, 0.0)])


def finite_diff_gradient(f, x, h: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function."""
    if not 1e-8 <= h <= 1e-4:
        raise ValueError("step h must lie in [1e-8, 1e-4]")
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    flat = x.ravel()
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = h
        g[k] = (f((flat + e).reshape(x.shape)) - f((flat - e).reshape(x.shape))) / (2 * h)
    return g.reshape(x.shape)


def grid_vi_check(x_star, spec: QuadraticGameSpec, cspec: AffineConstraintSpec, samples: int = 10_000,
                  stream: RngStream | None = None, feas_tol: float = 0.0) -> float:
    """max <x - x*, v(x*)> over rejection-sampled feasible joint strategies and
    feasible single-agent vertex deviations from x*."""
    stream = stream or RngStream(0, 0x6121D)
    x_star = np.asarray(x_star, dtype=float).reshape(spec.N, spec.D)
    r = vi_residual(spec, cspec, x_star, stream, samples, feas_tol)
    if r == -np.inf:
        raise SamplingError("no feasible probe point found")
    return r
