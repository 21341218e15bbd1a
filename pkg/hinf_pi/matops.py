"""
Symmetric-matrix vectorization, Kronecker machinery and the stochastic
Lyapunov operator

    L_{X,Z}(Y) = X'Y + YX + Z'YZ,   vec(L_{X,Z}(Y)) = (P(X) + Q(Z)) vec(Y)

with P(X) = I (x) X' + X' (x) I and Q(Z) = Z' (x) Z'. vec stacks columns.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as linalg

from hinf_pi.utils.errors import PolicyNotStabilizingError
from hinf_pi.utils.logger import logger
from hinf_pi.utils.messages import LogMessages

ASYMMETRY_TOL = 1e-10
CONDITION_LIMIT = 1e12


def vec(M: np.ndarray) -> np.ndarray:
    """Return the vectorized matrix M by stacking its columns."""
    return np.asarray(M).reshape(-1, order="F")


def mat(v: np.ndarray, shape) -> np.ndarray:
    """Inverse of vec."""
    return np.asarray(v).reshape(shape, order="F")


def symmetrize(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    """
    Symmetric part of a square matrix, with a warning when M is visibly asymmetric.

    Args:
        M: Square matrix.
        name: Label used in the warning and the error message.

    Returns:
        (M + M') / 2
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    gap = np.max(np.abs(M - M.T)) if M.size else 0.0
    if gap > ASYMMETRY_TOL:
        logger.warning(LogMessages.MATOPS_ASYMMETRIC.format(name=name, gap=gap))
    return 0.5 * (M + M.T)


def svec_size(n: int) -> int:
    """
    Returns:
        Length n(n+1)/2 of the half-vectorization of an n x n symmetric matrix.
    """
    return n * (n + 1) // 2


def svec_dim(q: int) -> int:
    """Recover n from a half-vectorization length n(n+1)/2."""
    n = int(round((np.sqrt(8 * q + 1) - 1) / 2))
    if svec_size(n) != q:
        raise ValueError(f"{q} is not a triangular number")
    return n


@lru_cache(maxsize=None)
def _upper_indices(n: int):
    return np.triu_indices(n)


def svec(P: np.ndarray) -> np.ndarray:
    """[p11, 2p12, ..., 2p1n, p22, 2p23, ..., pnn] of a symmetric matrix"""
    P = symmetrize(P, "P")
    rows, cols = _upper_indices(P.shape[0])
    weights = np.where(rows == cols, 1.0, 2.0)
    return P[rows, cols] * weights


def smat(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of svec"""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != svec_size(n):
        raise ValueError(f"svec of a {n}x{n} matrix has {svec_size(n)} entries, got {v.size}")
    rows, cols = _upper_indices(n)
    P = np.zeros((n, n))
    P[rows, cols] = np.where(rows == cols, v, 0.5 * v)
    return P + np.triu(P, 1).T


def quad_features(X: np.ndarray) -> np.ndarray:
    """
    Row-wise xbar = [x1^2, x1x2, ..., x1xn, x2^2, ..., xn^2], so that
    xbar . svec(P) = x'Px. Accepts a single vector or a batch (rows).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    rows, cols = _upper_indices(X.shape[1])
    return X[:, rows] * X[:, cols]


def half_vec(M: np.ndarray) -> np.ndarray:
    """Upper triangle, row-major, no doubling: half_vec(S) . svec(P) = tr(PS)."""
    M = np.asarray(M, dtype=float)
    rows, cols = _upper_indices(M.shape[0])
    return 0.5 * (M[rows, cols] + M[cols, rows])


@lru_cache(maxsize=None)
def _duplication(n: int) -> np.ndarray:
    T = np.zeros((n * n, svec_size(n)))
    for idx, (i, j) in enumerate(zip(*_upper_indices(n))):
        if i == j:
            T[i + n * j, idx] = 1.0
        else:
            T[i + n * j, idx] = 0.5
            T[j + n * i, idx] = 0.5
    T.setflags(write=False)
    return T


def duplication_matrix(n: int) -> np.ndarray:
    """T with vec(P) = T svec(P) for every symmetric n x n P"""
    return _duplication(n).copy()


def gain_quadratic_map(L: np.ndarray) -> np.ndarray:
    """
    Lbar = (L (x) L) T for an m x n matrix L, so that
    vec(L P L') = Lbar svec(P) for every symmetric n x n P.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    return np.kron(L, L) @ _duplication(L.shape[1])


@dataclass(frozen=True)
class LyapunovOperands:
    """Drift X, diffusion Z and right-hand side W of L_{X,Z}(Y) = -W"""
    X: np.ndarray
    Z: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        W = symmetrize(np.atleast_2d(self.W), "W")
        n = X.shape[0]
        for name, M in (("X", X), ("Z", Z), ("W", W)):
            if M.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {M.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.X.shape[0]


def stochastic_operator(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """P(X) + Q(Z), the n^2 x n^2 matrix of L_{X,Z} acting on vec(Y)"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape != Z.shape or X.shape[0] != X.shape[1]:
        raise ValueError(f"X and Z must be square of equal size, got {X.shape} and {Z.shape}")
    I = np.eye(X.shape[0])
    return np.kron(I, X.T) + np.kron(X.T, I) + np.kron(Z.T, Z.T)


def lyapunov_apply(X: np.ndarray, Z: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """L_{X,Z}(Y) evaluated directly"""
    return X.T @ Y + Y @ X + Z.T @ Y @ Z


def solve_stochastic_lyapunov(ops: LyapunovOperands) -> np.ndarray:
    """
    Solve X'Y + YX + Z'YZ = -W for symmetric Y.

    The n^2 system is restricted to symmetric matrices: unknowns svec(Y),
    equations the upper triangle of vec. Raises PolicyNotStabilizingError when
    the reduced operator is singular or its condition number exceeds 1e12.
    """
    n = ops.n
    T = _duplication(n)
    rows, cols = _upper_indices(n)
    keep = rows + n * cols
    K = stochastic_operator(ops.X, ops.Z)[keep] @ T
    rhs = -vec(ops.W)[keep]

    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise PolicyNotStabilizingError(
            f"Stochastic Lyapunov operator is singular (condition estimate {cond:.3e})"
        )

    Y = smat(linalg.solve(K, rhs), n)
    residual = np.linalg.norm(lyapunov_apply(ops.X, ops.Z, Y) + ops.W)
    bound = 1e-9 * (1.0 + np.linalg.norm(ops.W))
    if residual > bound:
        logger.warning(LogMessages.MATOPS_RESIDUAL.format(residual=residual, bound=bound))
    return Y


def ms_spectral_abscissa(X: np.ndarray, Z: np.ndarray) -> float:
    """Largest real part of the spectrum of P(X) + Q(Z); negative iff mean-square stable"""
    return float(np.max(linalg.eigvals(stochastic_operator(X, Z)).real))


def min_eig(M: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of M (Loewner-order checks)"""
    M = np.asarray(M, dtype=float)
    return float(linalg.eigvalsh(0.5 * (M + M.T))[0])
