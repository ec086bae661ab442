"""Regularizers on the simplex, their mirror maps, Fenchel coupling and the
primal-dual distance used to track MAARP iterates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .numerics import NormSpec, product_norm

SIMPLEX_TOL = 1e-12

# regularizer kind -> (primal norm, dual norm)
_NORMS = {"entropy": ("l1", "linf"), "euclidean": ("l2", "l2")}


@dataclass(frozen=True)
class Regularizer:
    """Strongly convex regularizer on the ``dim``-simplex.

    ``entropy`` is the Gibbs entropy, 1-strongly convex w.r.t. l1 (logit
    choice); ``euclidean`` is half the squared l2 norm, whose mirror map is the
    Euclidean projection.
    """

    kind: str
    dim: int
    K: float = 1.0

    def __post_init__(self):
        if self.kind not in _NORMS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.K > 0:
            raise ValueError("strong convexity modulus must be positive")

    @property
    def primal_norm(self) -> str:
        return _NORMS[self.kind][0]

    @property
    def dual_norm(self) -> str:
        return _NORMS[self.kind][1]

    def norm_spec(self) -> NormSpec:
        return NormSpec(self.primal_norm, (self.dim,))


Regs = Union[Regularizer, Sequence[Regularizer]]


def _check_finite(y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("dual vector contains NaN or Inf")
    return y


def softmax(y: np.ndarray) -> np.ndarray:
    """Row-wise logit choice with the max-shift trick."""
    z = np.exp(y - y.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean projection onto the simplex (sort and threshold)."""
    y = np.asarray(y, dtype=float)
    shape = y.shape
    y = np.atleast_2d(y)
    D = y.shape[-1]
    u = -np.sort(-y, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    k = np.arange(1, D + 1)
    cond = u - css / k > 0
    rho = D - 1 - np.argmax(cond[..., ::-1], axis=-1)
    tau = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(y - tau, 0.0).reshape(shape)


def _renormalize(x: np.ndarray) -> np.ndarray:
    s = x.sum(axis=-1, keepdims=True)
    return x / s


def mirror_map(reg: Regularizer, y) -> np.ndarray:
    """argmax over the simplex of <y, x> - psi(x); rows of ``y`` are mapped
    independently."""
    y = _check_finite(y)
    if y.shape[-1] != reg.dim:
        raise ValueError(f"expected last dimension {reg.dim}, got {y.shape[-1]}")
    if reg.kind == "entropy":
        x = softmax(y)
    else:
        x = project_simplex(y)
    return _renormalize(x)


def regularizer_value(reg: Regularizer, x) -> float:
    x = np.asarray(x, dtype=float)
    if reg.kind == "entropy":
        pos = x > 0
        return float(np.sum(x[pos] * np.log(x[pos])))
    return 0.5 * float(x @ x)


def logsumexp(y) -> float:
    y = np.asarray(y, dtype=float)
    m = y.max()
    return float(m + np.log(np.sum(np.exp(y - m))))


def conjugate_value(reg: Regularizer, y) -> float:
    """psi*(y) = <y, Phi(y)> - psi(Phi(y))."""
    y = _check_finite(y)
    x = mirror_map(reg, y)
    return float(y @ x) - regularizer_value(reg, x)


def fenchel_coupling(reg: Regularizer, p, y) -> float:
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    return regularizer_value(reg, p) + conjugate_value(reg, y) - float(y @ p)


def delta_psi(reg: Regularizer, D: int | None = None) -> float:
    """Range max psi - min psi of the regularizer over the D-simplex."""
    D = reg.dim if D is None else D
    if D < 1:
        raise ValueError("D must be >= 1")
    if reg.kind == "entropy":
        return float(np.log(D))
    return 0.5 * (1.0 - 1.0 / D)


def as_reg_list(regs: Regs, N: int) -> list[Regularizer]:
    if isinstance(regs, Regularizer):
        return [regs] * N
    regs = list(regs)
    if len(regs) != N:
        raise ValueError(f"need {N} regularizers, got {len(regs)}")
    return regs


def joint_mirror_map(regs: Regs, Y: np.ndarray) -> np.ndarray:
    """Blockwise mirror map for an (N, D) score array."""
    if isinstance(regs, Regularizer):
        return mirror_map(regs, Y)
    return np.stack([mirror_map(r, y) for r, y in zip(as_reg_list(regs, len(Y)), Y)])


def joint_norm_spec(regs: Regs, N: int) -> NormSpec:
    rl = as_reg_list(regs, N)
    return NormSpec(tuple(r.primal_norm for r in rl), tuple(r.dim for r in rl))


def extended_distance(regs: Regs, x_star, lam_star, Y, Lam) -> float:
    """Sum of per-agent Fenchel couplings F_i(x*_i, Y_i) plus half the squared
    price gap."""
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    lam_star = np.asarray(lam_star, dtype=float).ravel()
    Lam = np.asarray(Lam, dtype=float).ravel()
    if x_star.shape != Y.shape or lam_star.shape != Lam.shape:
        raise ValueError("dimension mismatch between oracle point and iterate")
    rl = as_reg_list(regs, len(Y))
    primal = sum(fenchel_coupling(r, p, y) for r, p, y in zip(rl, x_star, Y))
    return float(primal + 0.5 * np.sum((lam_star - Lam) ** 2))


def joint_product_norm(regs: Regs, x, dual: bool = False) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return product_norm(x.ravel(), joint_norm_spec(regs, len(x)), dual=dual)
