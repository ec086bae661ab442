"""Quadratic congestion game, affine coupled constraints and the extended
(KKT) operator.

Joint strategies are (N, D) arrays, one simplex point per row. Gradients and
other dual quantities share that layout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .geometry import Regs, as_reg_list, joint_product_norm
from .numerics import RngStream, psd_sqrt, sym_eig


@dataclass(frozen=True)
class QuadraticGameSpec:
    """Agent i pays J_i(x) = 1/2 <x_i, Q x_i> + <C sigma(x) + c_i, x_i> with
    sigma(x) the population mean strategy; its utility is -J_i."""

    N: int
    D: int
    Q: np.ndarray
    C: np.ndarray
    c: np.ndarray = None

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if Q.shape != (self.D, self.D) or C.shape != (self.D, self.D):
            raise ValueError("Q and C must be D x D")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-10:
            raise ValueError("Q must be symmetric")
        c = np.zeros((self.N, self.D)) if self.c is None else np.asarray(self.c, dtype=float)
        if c.shape == (self.D,):
            c = np.broadcast_to(c, (self.N, self.D)).copy()
        if c.shape != (self.N, self.D):
            raise ValueError("c must have shape (D,) or (N, D)")
        for a in (Q, C, c):
            a.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "c", c)

    def operator_matrix(self) -> np.ndarray:
        """Dense ND x ND matrix G with v(x) = -(G x + c). Small N*D only."""
        I = np.eye(self.N)
        ones = np.ones((self.N, self.N))
        return np.kron(I, self.Q) + np.kron(ones, self.C) / self.N + np.kron(I, self.C.T) / self.N


@dataclass(frozen=True)
class AffineConstraintSpec:
    """Coupled loads g(x) = sum_i A_i h_i(x_i) - b with identity h_i.

    ``A`` is either (R, D), shared by every agent, or (N, R, D).
    """

    A: np.ndarray
    b: np.ndarray
    transform: str = "identity"

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.ndim not in (2, 3):
            raise ValueError("A must be (R, D) or (N, R, D)")
        if A.shape[-2] != b.size:
            raise ValueError(f"A has {A.shape[-2]} rows but b has length {b.size}")
        if self.transform != "identity":
            raise NotImplementedError("only the identity transform is implemented")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def R(self) -> int:
        return self.b.size

    @property
    def shared(self) -> bool:
        return self.A.ndim == 2

    def agent_matrix(self, i: int) -> np.ndarray:
        return self.A if self.shared else self.A[i]

    def agent_matrices(self, N: int) -> np.ndarray:
        return np.broadcast_to(self.A, (N,) + self.A.shape) if self.shared else self.A


def _check_joint(x, N, D):
    x = np.asarray(x, dtype=float)
    if x.size != N * D:
        raise ValueError(f"joint strategy has {x.size} entries, expected {N}x{D}")
    return x.reshape(N, D)


def utility_gradient(spec: QuadraticGameSpec, x) -> np.ndarray:
    """v_i(x) = -(Q x_i + C sigma(x) + c_i + C^T x_i / N), blockwise."""
    x = _check_joint(x, spec.N, spec.D)
    sigma = x.mean(axis=0)
    return -(x @ spec.Q.T + sigma @ spec.C.T + spec.c + (x @ spec.C) / spec.N)


def agent_loss(spec: QuadraticGameSpec, x, i: int) -> float:
    if not 0 <= i < spec.N:
        raise IndexError(f"agent index {i} out of range for N={spec.N}")
    x = _check_joint(x, spec.N, spec.D)
    xi = x[i]
    sigma = x.mean(axis=0)
    return float(0.5 * xi @ spec.Q @ xi + (spec.C @ sigma + spec.c[i]) @ xi)


def agent_losses(spec: QuadraticGameSpec, x) -> np.ndarray:
    x = _check_joint(x, spec.N, spec.D)
    sigma = x.mean(axis=0)
    return 0.5 * np.einsum("nd,nd->n", x @ spec.Q, x) + np.einsum("nd,nd->n", sigma @ spec.C.T + spec.c, x)


def average_loss(spec: QuadraticGameSpec, x) -> float:
    return float(agent_losses(spec, x).mean())


def constraint_eval(cspec: AffineConstraintSpec, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != cspec.A.shape[-1] or (not cspec.shared and x.shape[0] != cspec.A.shape[0]):
        raise ValueError("joint strategy does not match constraint dimensions")
    if cspec.shared:
        return cspec.A @ x.sum(axis=0) - cspec.b
    return np.einsum("nrd,nd->r", cspec.A, x) - cspec.b


def constraint_gradient_pullback(cspec: AffineConstraintSpec, x, lam) -> np.ndarray:
    """Block i is A_i^T lam; it does not depend on x for identity transforms."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lam = np.asarray(lam, dtype=float)
    if cspec.shared:
        return np.broadcast_to(lam @ cspec.A, x.shape).copy()
    return np.einsum("nrd,r->nd", cspec.A, lam)


@dataclass(frozen=True)
class ExtendedPoint:
    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).ravel()
        if np.any(lam < 0):
            raise ValueError("prices must be nonnegative")
        object.__setattr__(self, "x", np.atleast_2d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "lam", lam)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.lam])


def extended_operator(spec: QuadraticGameSpec, cspec: AffineConstraintSpec, z: ExtendedPoint) -> np.ndarray:
    """[v(x) - grad g(x)^T lam, g(x)] flattened to length N*D + R."""
    x = _check_joint(z.x, spec.N, spec.D)
    top = utility_gradient(spec, x) - constraint_gradient_pullback(cspec, x, z.lam)
    return np.concatenate([top.ravel(), constraint_eval(cspec, x)])


def check_strict_monotonicity(spec: QuadraticGameSpec) -> float:
    """Smallest eigenvalue of the symmetric part of the game operator matrix.

    The symmetric part is I (x) (Q + S/N) + (1/N) 11^T (x) S with S = sym(C),
    so its spectrum is that of Q + S/N + S (mean direction) together with that
    of Q + S/N (the N-1 directions orthogonal to it).
    """
    S = 0.5 * (spec.C + spec.C.T)
    base = spec.Q + S / spec.N
    mins = [sym_eig(base + S)[0][-1]]
    if spec.N > 1:
        mins.append(sym_eig(base)[0][-1])
    return float(min(mins))


@dataclass(frozen=True)
class SlaterReport:
    feasible_point: np.ndarray
    loads: np.ndarray
    margin: float

    @property
    def satisfied(self) -> bool:
        return self.margin < 0


def barycenter(N: int, D: int) -> np.ndarray:
    return np.full((N, D), 1.0 / D)


def check_slater(spec: QuadraticGameSpec, cspec: AffineConstraintSpec) -> SlaterReport:
    """Loads at the joint barycenter. A nonnegative margin does not prove that
    no strictly feasible point exists."""
    x = barycenter(spec.N, spec.D)
    g = constraint_eval(cspec, x)
    return SlaterReport(x, g, float(g.max()))


@dataclass(frozen=True)
class BoundConstants:
    C1: float
    C2: float
    C3: float
    K: float = 1.0


def _dual_block_operator_norm(Ai: np.ndarray, dual_norm: str) -> float:
    # max ||A_i^T lam||_dual over ||lam||_2 <= 1
    if dual_norm == "linf":
        return float(np.sqrt(np.max(np.sum(Ai**2, axis=0))))
    if dual_norm == "l2":
        return float(np.sqrt(max(sym_eig(Ai @ Ai.T)[0][0], 0.0)))
    raise NotImplementedError(f"operator norm into {dual_norm}")


def _joint_vertices(N: int, D: int, stream: RngStream, limit: int):
    if D**N <= limit:
        for idx in itertools.product(range(D), repeat=N):
            yield np.eye(D)[list(idx)]
    else:
        for _ in range(limit):
            yield np.eye(D)[stream.integers(D, size=N)]


def compute_bound_constants(
    spec: QuadraticGameSpec,
    cspec: AffineConstraintSpec,
    regs: Regs,
    stream: RngStream | None = None,
    samples: int = 10_000,
    vertex_limit: int = 4096,
) -> BoundConstants:
    """Sampled bounds on sup ||v||_*, sup ||g||_2 and the analytic pullback
    constant C1 = sqrt(sum_i ||A_i^T||^2_{2 -> dual_i}).

    v and g are affine, so their norms peak at joint vertices; vertices are
    enumerated when D^N is small and sampled otherwise. C2 and C3 are advisory,
    not certified, suprema.
    """
    stream = stream or RngStream(0, 0xB0C0)
    rl = as_reg_list(regs, spec.N)
    K = min(r.K for r in rl)
    blocks = [_dual_block_operator_norm(cspec.agent_matrix(i), rl[i].dual_norm) for i in range(spec.N)]
    C1 = float(np.sqrt(np.sum(np.square(blocks))))

    C2 = C3 = 0.0
    points = itertools.chain(
        _joint_vertices(spec.N, spec.D, stream, vertex_limit),
        (stream.dirichlet(np.ones(spec.D), size=spec.N) for _ in range(samples)),
    )
    for x in points:
        C2 = max(C2, joint_product_norm(rl, utility_gradient(spec, x), dual=True))
        C3 = max(C3, float(np.linalg.norm(constraint_eval(cspec, x))))
    return BoundConstants(C1=C1, C2=C2, C3=C3, K=K)


@dataclass
class GameParams:
    C_scale: float = 4.0
    c: np.ndarray | float = 0.0
    Q_scale: float = 2.0


def generate_random_game(stream: RngStream, N: int, D: int, params: GameParams | None = None) -> QuadraticGameSpec:
    """Q = 2 sqrt(Qt^T Qt) + I with standard normal Qt, C = 4 I, c = 0."""
    if N < 1 or D < 1:
        raise ValueError("N and D must be >= 1")
    params = params or GameParams()
    Qt = stream.normal((D, D))
    Q = params.Q_scale * psd_sqrt(Qt.T @ Qt) + np.eye(D)
    C = params.C_scale * np.eye(D)
    c = np.broadcast_to(np.asarray(params.c, dtype=float), (N, D)).copy()
    return QuadraticGameSpec(N=N, D=D, Q=Q, C=C, c=c)


def uniform_constraints(D: int, d: float, A_scale: float = 4.0) -> AffineConstraintSpec:
    """A_i = A_scale * I for every agent (R = D) and b = d * 1."""
    return AffineConstraintSpec(A=A_scale * np.eye(D), b=np.full(D, float(d)))
