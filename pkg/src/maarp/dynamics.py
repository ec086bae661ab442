"""MAARP and baseline learning dynamics.

Every step reads the current state (X_n, Lambda_n) and returns a new state.
MAARP updates scores and prices from the same pre-step state; the asymmetric
projection baseline updates prices from the freshly computed X_{n+1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .game import (
    AffineConstraintSpec,
    BoundConstants,
    QuadraticGameSpec,
    agent_losses,
    constraint_eval,
    constraint_gradient_pullback,
    utility_gradient,
)
from .geometry import Regs, extended_distance, joint_mirror_map
from .metrics import TrajectoryRecord, rnccv, running_mean
from .numerics import RngStream

ALGORITHMS = ("maarp", "anarchy", "primal_dual", "asymmetric_projection")
NOISE_KINDS = ("none", "gaussian", "product")
SCORE_LIMIT = 1e12


class NumericalFailure(RuntimeError):
    def __init__(self, n: int, message: str):
        super().__init__(f"iteration {n}: {message}")
        self.n = n


@dataclass(frozen=True)
class Schedule:
    """gamma_n = gamma0 / (n + 1)^p and alpha_n = alpha * gamma_n."""

    gamma0: float = 0.5
    p: float = 0.5
    alpha: float = 5.0

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not 0 < self.p <= 1:
            raise ValueError("exponent p must lie in (0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    def gamma(self, n):
        if np.ndim(n):
            return self.gamma0 / (np.asarray(n, dtype=float) + 1.0) ** self.p
        return self.gamma0 / (n + 1.0) ** self.p

    def alpha_n(self, n):
        return self.alpha * self.gamma(n)


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "none"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.sigma > 0


@dataclass
class SimState:
    n: int
    Y: np.ndarray
    X: np.ndarray
    Lam: np.ndarray
    rng: RngStream | None = None
    prev_eps: np.ndarray | None = None


def initial_state(
    spec: QuadraticGameSpec,
    cspec: AffineConstraintSpec | None,
    regs: Regs,
    rng: RngStream | None = None,
    noise: NoiseModel | None = None,
    Y0=None,
    Lam0=None,
) -> SimState:
    R = cspec.R if cspec is not None else 0
    Y = np.zeros((spec.N, spec.D)) if Y0 is None else np.array(Y0, dtype=float).reshape(spec.N, spec.D)
    Lam = np.zeros(R) if Lam0 is None else np.array(Lam0, dtype=float).ravel()
    if np.any(Lam < 0):
        raise ValueError("initial prices must be nonnegative")
    prev = None
    if noise is not None and noise.kind == "product" and noise.active:
        # eps_{-1} so that the first product increment is defined
        prev = noise.sigma * rng.normal((spec.N, spec.D))
    return SimState(0, Y, joint_mirror_map(regs, Y), Lam, rng, prev)


def noisy_gradient(spec: QuadraticGameSpec, x, noise: NoiseModel, state: SimState) -> np.ndarray:
    """v(x) plus a martingale-difference increment; advances ``state``'s
    noise memory for the product model."""
    v = utility_gradient(spec, x)
    if not noise.active:
        return v
    eps = noise.sigma * state.rng.normal(v.shape)
    if noise.kind == "gaussian":
        return v + eps
    M = eps * state.prev_eps
    state.prev_eps = eps
    return v + M


def _guard(n: int, Y: np.ndarray, Lam: np.ndarray):
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Lam))):
        raise NumericalFailure(n, "NaN or Inf in scores or prices")
    if np.max(np.abs(Y)) > SCORE_LIMIT:
        raise NumericalFailure(n, f"score blow-up (|Y| > {SCORE_LIMIT:g})")


def maarp_step(
    state: SimState,
    spec: QuadraticGameSpec,
    cspec: AffineConstraintSpec,
    schedule: Schedule,
    noise: NoiseModel,
    regs: Regs,
) -> SimState:
    n, X, Lam = state.n, state.X, state.Lam
    gamma = schedule.gamma(n)
    v_hat = noisy_gradient(spec, X, noise, state)
    Y = state.Y + gamma * (v_hat - constraint_gradient_pullback(cspec, X, Lam))
    Lam_next = np.maximum(Lam + gamma * (constraint_eval(cspec, X) - schedule.alpha_n(n) * Lam), 0.0)
    _guard(n, Y, Lam_next)
    return SimState(n + 1, Y, joint_mirror_map(regs, Y), Lam_next, state.rng, state.prev_eps)


def primal_dual_step(state, spec, cspec, schedule, noise, regs) -> SimState:
    return maarp_step(state, spec, cspec, replace(schedule, alpha=0.0), noise, regs)


def anarchy_step(state, spec, cspec, schedule, noise, regs) -> SimState:
    """Plain mirror ascent; prices are never consulted."""
    n = state.n
    Y = state.Y + schedule.gamma(n) * noisy_gradient(spec, state.X, noise, state)
    _guard(n, Y, state.Lam)
    return SimState(n + 1, Y, joint_mirror_map(regs, Y), state.Lam, state.rng, state.prev_eps)


def ap_step(state, spec, cspec, schedule, noise, regs) -> SimState:
    """Primal update with current prices and no augmentation, then a dual step
    on the extrapolated load 2 g(X_{n+1}) - g(X_n)."""
    n, X, Lam = state.n, state.X, state.Lam
    gamma = schedule.gamma(n)
    v_hat = noisy_gradient(spec, X, noise, state)
    Y = state.Y + gamma * (v_hat - constraint_gradient_pullback(cspec, X, Lam))
    X_next = joint_mirror_map(regs, Y)
    g_extra = 2.0 * constraint_eval(cspec, X_next) - constraint_eval(cspec, X)
    Lam_next = np.maximum(Lam + gamma * g_extra, 0.0)
    _guard(n, Y, Lam_next)
    return SimState(n + 1, Y, X_next, Lam_next, state.rng, state.prev_eps)


STEPS: dict[str, Callable[..., SimState]] = {
    "maarp": maarp_step,
    "anarchy": anarchy_step,
    "primal_dual": primal_dual_step,
    "asymmetric_projection": ap_step,
}


@dataclass
class ScheduleReport:
    summability: bool
    ergodic: bool
    alpha_sufficient: bool
    alpha_threshold: float
    trackable_from: int | None
    notes: list[str] = field(default_factory=list)

    @property
    def last_iterate(self) -> bool:
        """All sufficient conditions for last-iterate convergence hold."""
        return self.summability and self.alpha_sufficient and self.trackable_from is not None


def validate_schedule(schedule: Schedule, constants: BoundConstants, horizon: int = 10**6) -> ScheduleReport:
    """Advisory check of the sufficient step-size conditions. Never rejects.

    ``summability`` covers sum gamma = inf together with the finiteness of
    sum gamma^2, sum gamma^2 sigma^2 (bounded noise) and sum gamma alpha, all of
    which hold for alpha_n = alpha gamma_n exactly when p > 1/2.
    """
    p, alpha = schedule.p, schedule.alpha
    C1sq_K = constants.C1**2 / constants.K
    summability = 0.5 < p <= 1.0
    # sum gamma = inf, sum gamma^2 / sum gamma -> 0, sum gamma alpha / sum gamma -> 0
    ergodic = 0.0 < p <= 1.0
    threshold = 2.0 * C1sq_K
    sufficient = alpha > threshold

    n = np.arange(horizon, dtype=float)
    gamma = schedule.gamma(n)
    ok = alpha**2 * gamma**2 + C1sq_K - alpha / 2.0 <= 0
    # the expression is nonincreasing in n, so the first hit holds onward
    trackable_from = int(np.argmax(ok)) if ok.any() else None

    notes = []
    if not summability:
        notes.append(f"p={p:g} <= 1/2: only ergodic-average guarantees apply")
    if not sufficient:
        notes.append(f"alpha={alpha:g} <= 2 C1^2/K = {threshold:.4g}: run is outside the sufficient trackability condition")
    if trackable_from is None:
        notes.append(f"trackability inequality never holds up to n={horizon}")
    return ScheduleReport(summability, ergodic, sufficient, threshold, trackable_from, notes)


@dataclass
class RunResult:
    """Metric series on the recording grid plus the final state.

    ``series["iter"][j] = n`` pairs state metrics of X_n with ergodic metrics
    of the gamma-weighted average over X_0..X_{n-1}.
    """

    algorithm: str
    series: dict[str, np.ndarray]
    final_state: SimState
    records: list[TrajectoryRecord]


def run(
    algorithm: str,
    spec: QuadraticGameSpec,
    cspec: AffineConstraintSpec,
    schedule: Schedule,
    noise: NoiseModel,
    regs: Regs,
    iters: int,
    rng: RngStream | int | None = None,
    record_every: int = 1,
    Y0=None,
    Lam0=None,
    oracle: tuple[np.ndarray, np.ndarray] | None = None,
    keep_records: bool = False,
) -> RunResult:
    """Iterate ``algorithm`` for ``iters`` steps from Y0 = 0, Lambda0 = 0.

    CVio and the ergodic averages are accumulated every step; snapshots and
    series rows are kept every ``record_every`` steps and at the last step.
    """
    if algorithm not in STEPS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    if not isinstance(rng, RngStream):
        rng = RngStream(0 if rng is None else rng, 0)
    step = STEPS[algorithm]
    state = initial_state(spec, cspec, regs, rng, noise, Y0, Lam0)

    loads = constraint_eval(cspec, state.X)
    w_sum = 0.0
    wg_sum = np.zeros(cspec.R)
    wx_sum = np.zeros_like(state.X)
    ux_sum = np.zeros_like(state.X)

    rows: dict[str, list] = {k: [] for k in (
        "iter", "gamma", "rnccv_state", "rnccv_ergodic", "rnccv_ergodic_unweighted",
        "cvio_max", "avg_loss", "avg_loss_ergodic", "price_norm")}
    cvio_rows = []
    dist_rows = []
    records = []

    for k in range(iters):
        gamma = schedule.gamma(k)
        w_sum += gamma
        wg_sum += gamma * loads
        wx_sum += gamma * state.X
        ux_sum += state.X
        if keep_records:
            records.append(TrajectoryRecord(k, gamma, state.X, state.Lam, loads, float(agent_losses(spec, state.X).mean()), state.Y))

        state = step(state, spec, cspec, schedule, noise, regs)
        loads = constraint_eval(cspec, state.X)

        n = k + 1
        if n % record_every == 0 or n == iters:
            x_bar = wx_sum / w_sum
            x_unw = ux_sum / n
            cv = wg_sum / w_sum
            rows["iter"].append(n)
            rows["gamma"].append(schedule.gamma(n))
            rows["rnccv_state"].append(rnccv(loads))
            rows["rnccv_ergodic"].append(rnccv(constraint_eval(cspec, x_bar)))
            rows["rnccv_ergodic_unweighted"].append(rnccv(constraint_eval(cspec, x_unw)))
            rows["cvio_max"].append(float(cv.max()))
            rows["avg_loss"].append(float(agent_losses(spec, state.X).mean()))
            rows["avg_loss_ergodic"].append(float(agent_losses(spec, x_bar).mean()))
            rows["price_norm"].append(float(np.linalg.norm(state.Lam)))
            cvio_rows.append(cv)
            if oracle is not None:
                dist_rows.append(extended_distance(regs, oracle[0], oracle[1], state.Y, state.Lam))

    if keep_records:
        records.append(TrajectoryRecord(state.n, schedule.gamma(state.n), state.X, state.Lam, loads,
                                        float(agent_losses(spec, state.X).mean()), state.Y))
    series = {k: np.asarray(v) for k, v in rows.items()}
    series["cvio"] = np.asarray(cvio_rows)
    # time average of the ergodic loss, taken over the recording grid
    series["loss_time_average"] = running_mean(series["avg_loss_ergodic"])
    if oracle is not None:
        series["distance"] = np.asarray(dist_rows)
    return RunResult(algorithm, series, state, records)
