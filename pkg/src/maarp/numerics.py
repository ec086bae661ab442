"""Shared numerical kernels: product norms, symmetric eigensolver, PSD square
root and deterministic random streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NORM_KINDS = ("l1", "l2", "linf")
_DUAL = {"l1": "linf", "l2": "l2", "linf": "l1"}
_ORD = {"l1": 1, "l2": 2, "linf": np.inf}

# eigenvalues below this are rounding noise of a PSD matrix
PSD_CLAMP = -1e-10
PSD_REJECT = -1e-6


class NotPSDError(ValueError):
    pass


@dataclass(frozen=True)
class NormSpec:
    """Per-agent block norms composed in l2 across blocks."""

    kind: str | tuple[str, ...]
    block_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.block_dims)
        if not dims or any(d <= 0 for d in dims):
            raise ValueError(f"block_dims must be positive, got {self.block_dims}")
        object.__setattr__(self, "block_dims", dims)
        kinds = (self.kind,) * len(dims) if isinstance(self.kind, str) else tuple(self.kind)
        if len(kinds) != len(dims):
            raise ValueError("one norm kind per block required")
        for k in kinds:
            if k not in NORM_KINDS:
                raise ValueError(f"unknown norm kind {k!r}")
        object.__setattr__(self, "kind", kinds)

    @property
    def dim(self) -> int:
        return sum(self.block_dims)

    def dual(self) -> "NormSpec":
        return NormSpec(tuple(_DUAL[k] for k in self.kind), self.block_dims)


def product_norm(x, spec: NormSpec, dual: bool = False) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.dim:
        raise ValueError(f"vector has dimension {x.size}, norm expects {spec.dim}")
    kinds = spec.dual().kind if dual else spec.kind
    total = 0.0
    start = 0
    for kind, d in zip(kinds, spec.block_dims):
        total += np.linalg.norm(x[start:start + d], ord=_ORD[kind]) ** 2
        start += d
    return float(np.sqrt(total))


def sym_eig(M, tol: float = 1e-15, max_sweeps: int = 100):
    """Cyclic Jacobi eigensolver.

    Returns ``(w, V)`` with eigenvalues in descending order and orthonormal
    eigenvectors as the columns of ``V``. The input is symmetrized first.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"sym_eig needs a square matrix, got shape {M.shape}")
    n = M.shape[0]
    A = 0.5 * (M + M.T)
    V = np.eye(n)
    if n == 0:
        return np.zeros(0), V
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), V

    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows and columns p, q
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq

    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def psd_sqrt(M) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    w, V = sym_eig(M)
    if w.size and w.min() < PSD_REJECT:
        raise NotPSDError(f"matrix is not PSD: min eigenvalue {w.min():.3e}")
    w = np.where(w < PSD_CLAMP, 0.0, np.clip(w, 0.0, None))
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_id)``.

    Backed by Philox; two streams with the same key replay bit-identically and
    distinct ids give independent streams. A stream has a single owner.
    """

    master_seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        mask = (1 << 64) - 1
        self.master_seed = int(self.master_seed) & mask
        self.stream_id = int(self.stream_id) & mask
        seq = np.random.SeedSequence([self.master_seed, self.stream_id])
        self._gen = np.random.Generator(np.random.Philox(seq))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, size=None):
        return self._gen.random(size)

    def dirichlet(self, alpha: Sequence[float], size=None) -> np.ndarray:
        return self._gen.dirichlet(alpha, size)

    def integers(self, high: int, size=None):
        return self._gen.integers(0, high, size=size)


def gaussian_vector(stream: RngStream, dim: int, sigma: float) -> np.ndarray:
    """``dim`` i.i.d. N(0, sigma^2) samples.

    ``sigma == 0`` returns zeros and leaves the stream untouched.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return np.zeros(dim)
    return sigma * stream.normal(dim)
