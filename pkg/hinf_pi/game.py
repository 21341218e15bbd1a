"""
Data model of the linear-quadratic stochastic zero-sum game

    dX = (AX + B1 u + B2 v) ds + (CX + D u) dW
    J  = E int (X'QX + u'Ru - gamma^2 v'v) ds

together with the block matrix M(P), the GARE residual, saddle-point gains
and the mean-square stabilizer test.
"""
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as linalg

from hinf_pi.matops import (
    LyapunovOperands,
    ms_spectral_abscissa,
    solve_stochastic_lyapunov,
    symmetrize,
)
from hinf_pi.utils.errors import PolicyNotStabilizingError, SingularBlockError
from hinf_pi.utils.logger import logger
from hinf_pi.utils.messages import LogMessages

# Symmetric n x n iterate P of the game value x'Px
ValueMatrix = np.ndarray

PSD_TOL = 1e-10
STABILITY_MARGIN = 1e-6
SINGULAR_COND = 1e12


def _matrix(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got {M.ndim} dimensions")
    M = M.copy()
    M.setflags(write=False)
    return M


def checked_solve(S: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """
    Solve S X = rhs after a condition check.

    Args:
        S: Square block to invert.
        rhs: Right-hand side.
        what: Name of the block, used in the error.

    Raises:
        SingularBlockError: S is singular or its condition estimate exceeds SINGULAR_COND.
    """
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularBlockError(f"{what} is singular (condition estimate {cond:.3e})")
    return linalg.solve(S, rhs)


@dataclass(frozen=True)
class SystemModel:
    """The five coefficient matrices of the controlled SDE"""
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "B1", "B2", "C", "D"):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.C.shape != (n, n):
            raise ValueError(f"C must be {n}x{n}, got {self.C.shape}")
        if self.B1.shape[0] != n or self.B2.shape[0] != n:
            raise ValueError(f"B1 and B2 must have {n} rows, got {self.B1.shape} and {self.B2.shape}")
        if self.D.shape != self.B1.shape:
            raise ValueError(f"D must have the shape of B1 {self.B1.shape}, got {self.D.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m1(self) -> int:
        return self.B1.shape[1]

    @property
    def m2(self) -> int:
        return self.B2.shape[1]

    def closed_loop(self, Lu: np.ndarray, Lv: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Drift A + B1 Lu + B2 Lv and diffusion C + D Lu under (u, v) = (Lu x, Lv x)"""
        return self.A + self.B1 @ Lu + self.B2 @ Lv, self.C + self.D @ Lu


@dataclass(frozen=True)
class CostSpec:
    """Weights of the game payoff and the attenuation level"""
    Q: np.ndarray
    R: np.ndarray
    gamma: float

    def __post_init__(self):
        Q = symmetrize(_matrix(self.Q, "Q"), "Q")
        R = symmetrize(_matrix(self.R, "R"), "R")
        if linalg.eigvalsh(Q)[0] < -PSD_TOL:
            raise ValueError("Q must be positive semidefinite")
        if linalg.eigvalsh(R)[0] < PSD_TOL:
            raise ValueError("R must be positive definite")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        Q.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "gamma", float(self.gamma))

    def check_against(self, sys: SystemModel):
        if self.Q.shape != (sys.n, sys.n):
            raise ValueError(f"Q must be {sys.n}x{sys.n}, got {self.Q.shape}")
        if self.R.shape != (sys.m1, sys.m1):
            raise ValueError(f"R must be {sys.m1}x{sys.m1}, got {self.R.shape}")

    def stage_weight(self, Lu: np.ndarray, Lv: np.ndarray) -> np.ndarray:
        """Lu'R Lu + Q - gamma^2 Lv'Lv, the running cost of the linear policy pair"""
        return Lu.T @ self.R @ Lu + self.Q - self.gamma ** 2 * (Lv.T @ Lv)


@dataclass(frozen=True)
class Gains:
    """Control feedback Lu (m1 x n) and disturbance feedback Lv (m2 x n)"""
    Lu: np.ndarray
    Lv: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Lu", np.atleast_2d(np.asarray(self.Lu, dtype=float)))
        object.__setattr__(self, "Lv", np.atleast_2d(np.asarray(self.Lv, dtype=float)))

    def check_against(self, sys: SystemModel):
        if self.Lu.shape != (sys.m1, sys.n) or self.Lv.shape != (sys.m2, sys.n):
            raise ValueError(
                f"Gains must be {sys.m1}x{sys.n} and {sys.m2}x{sys.n}, got {self.Lu.shape} and {self.Lv.shape}"
            )

    @classmethod
    def zeros(cls, sys: SystemModel) -> "Gains":
        return cls(np.zeros((sys.m1, sys.n)), np.zeros((sys.m2, sys.n)))


@dataclass(frozen=True)
class GameBlockMatrix:
    """
    M = [[M_xx, M_ux', M_vx'],
         [M_ux, M_uu, 0   ],
         [M_vx, 0,    M_vv]]
    """
    M: np.ndarray
    n: int
    m1: int
    m2: int

    @property
    def xx(self) -> np.ndarray:
        return self.M[: self.n, : self.n]

    @property
    def ux(self) -> np.ndarray:
        return self.M[self.n: self.n + self.m1, : self.n]

    @property
    def vx(self) -> np.ndarray:
        return self.M[self.n + self.m1:, : self.n]

    @property
    def uu(self) -> np.ndarray:
        return self.M[self.n: self.n + self.m1, self.n: self.n + self.m1]

    @property
    def uv(self) -> np.ndarray:
        return self.M[self.n: self.n + self.m1, self.n + self.m1:]

    @property
    def vv(self) -> np.ndarray:
        return self.M[self.n + self.m1:, self.n + self.m1:]

    def __add__(self, dM: np.ndarray) -> "GameBlockMatrix":
        return GameBlockMatrix(self.M + symmetrize(dM, "dM"), self.n, self.m1, self.m2)

    def hamiltonian(self, Lu: np.ndarray, Lv: np.ndarray) -> np.ndarray:
        """[I Lu' Lv'] M [I; Lu; Lv]"""
        S = np.vstack([np.eye(self.n), Lu, Lv])
        return S.T @ self.M @ S


def assemble_M(P: ValueMatrix, sys: SystemModel, cost: CostSpec) -> GameBlockMatrix:
    P = symmetrize(P, "P")
    n, m1, m2 = sys.n, sys.m1, sys.m2
    A, B1, B2, C, D = sys.A, sys.B1, sys.B2, sys.C, sys.D

    M = np.zeros((n + m1 + m2, n + m1 + m2))
    ux = B1.T @ P + D.T @ P @ C
    vx = B2.T @ P
    M[:n, :n] = cost.Q + A.T @ P + P @ A + C.T @ P @ C
    M[n: n + m1, :n] = ux
    M[:n, n: n + m1] = ux.T
    M[n + m1:, :n] = vx
    M[:n, n + m1:] = vx.T
    M[n: n + m1, n: n + m1] = cost.R + D.T @ P @ D
    M[n + m1:, n + m1:] = -cost.gamma ** 2 * np.eye(m2)
    return GameBlockMatrix(0.5 * (M + M.T), n, m1, m2)


def gare_residual(P: ValueMatrix, sys: SystemModel, cost: CostSpec) -> np.ndarray:
    """Left-hand side of the game algebraic Riccati equation at P"""
    blocks = assemble_M(P, sys, cost)
    gain_u = checked_solve(blocks.uu, blocks.ux, "R + D'PD")
    residual = (
        blocks.xx
        + blocks.vx.T @ blocks.vx / cost.gamma ** 2
        - blocks.ux.T @ gain_u
    )
    return 0.5 * (residual + residual.T)


def saddle_gains(P: ValueMatrix, sys: SystemModel, cost: CostSpec) -> Gains:
    """Lu = -(R + D'PD)^-1 (B1'P + D'PC),  Lv = gamma^-2 B2'P"""
    blocks = assemble_M(P, sys, cost)
    Lu = -checked_solve(blocks.uu, blocks.ux, "R + D'PD")
    Lv = blocks.vx / cost.gamma ** 2
    return Gains(Lu, Lv)


@dataclass(frozen=True)
class StabilizerCheck:
    is_stable: bool
    abscissa: float

    def __bool__(self) -> bool:
        return self.is_stable


def is_stabilizer(g: Gains, sys: SystemModel, margin: float = STABILITY_MARGIN) -> StabilizerCheck:
    """
    Mean-square stability of the closed loop under (Lu, Lv). The abscissa has
    to clear -margin: defective eigenvalues on the imaginary axis are only
    resolved to about sqrt(machine eps).
    """
    g.check_against(sys)
    X, Z = sys.closed_loop(g.Lu, g.Lv)
    abscissa = ms_spectral_abscissa(X, Z)
    return StabilizerCheck(abscissa < -margin, abscissa)


def initialization_certificate(
    Lu: np.ndarray,
    sys: SystemModel,
    cost: CostSpec,
    tol: float = 1e-10,
    max_iter: int = 1000,
    blow_up: float = 1e8,
) -> Optional[ValueMatrix]:
    """
    P_u satisfying the initialization inequality of the two-loop iteration
    with equality, from the monotone iteration
        P <- solution of L_{X,Z}(P) = -(Q + Lu'R Lu + gamma^-2 P B2 B2' P),  P_0 = 0.
    None when (Lu, 0) is not a stabilizer or the iteration diverges.
    """
    Lu = np.atleast_2d(np.asarray(Lu, dtype=float))
    Lv = np.zeros((sys.m2, sys.n))
    if not is_stabilizer(Gains(Lu, Lv), sys):
        return None
    X, Z = sys.closed_loop(Lu, Lv)
    base = cost.Q + Lu.T @ cost.R @ Lu
    S = sys.B2 @ sys.B2.T / cost.gamma ** 2
    P = np.zeros((sys.n, sys.n))
    for _ in range(max_iter):
        P_next = solve_stochastic_lyapunov(LyapunovOperands(X, Z, base + P @ S @ P))
        if not np.all(np.isfinite(P_next)) or np.linalg.norm(P_next) > blow_up:
            return None
        if np.linalg.norm(P_next - P) <= tol * (1.0 + np.linalg.norm(P_next)):
            return P_next
        P = P_next
    return None


def _refine_gain(
    Lu: np.ndarray,
    Pu: ValueMatrix,
    sys: SystemModel,
    cost: CostSpec,
    max_steps: int = 30,
    tol: float = 1e-6,
) -> Tuple[np.ndarray, ValueMatrix]:
    """Minimizer updates against the certified value, kept while each new gain stays certified"""
    for _ in range(max_steps):
        Lu_next = saddle_gains(Pu, sys, cost).Lu
        Pu_next = initialization_certificate(Lu_next, sys, cost)
        if Pu_next is None:
            break
        step = np.linalg.norm(Pu_next - Pu)
        Lu, Pu = Lu_next, Pu_next
        if step <= tol * (1.0 + np.linalg.norm(Pu)):
            break
    return Lu, Pu


def _lower_attenuation(
    Lu: np.ndarray,
    sys: SystemModel,
    cost: CostSpec,
    max_doublings: int = 30,
    min_ratio: float = 0.5,
    max_ratio: float = 0.999,
) -> Optional[Tuple[np.ndarray, ValueMatrix]]:
    """
    Continuation in the attenuation level for a stabilizing gain that is not
    certified at cost.gamma.

    The level is doubled until Lu is certified, then lowered step by step
    towards cost.gamma. At each level the gain is refined with minimizer
    updates, so it stays certified at the next, smaller level.

    Returns:
        (Lu, Pu) certified at cost.gamma, or None when the level cannot be
        lowered any further.
    """
    level = cost.gamma
    for _ in range(max_doublings):
        level *= 2.0
        Pu = initialization_certificate(Lu, sys, replace(cost, gamma=level))
        if Pu is not None:
            break
    else:
        return None

    start, steps, ratio = level, 0, min_ratio
    while True:
        Lu, Pu = _refine_gain(Lu, Pu, sys, replace(cost, gamma=level))
        if level == cost.gamma:
            logger.info(LogMessages.GAME_INITIAL_CONTINUATION.format(
                start=start, gamma=cost.gamma, steps=steps, gain=np.round(Lu, 4).tolist(),
            ))
            return Lu, Pu
        while True:
            trial = max(cost.gamma, level * ratio)
            P_trial = initialization_certificate(Lu, sys, replace(cost, gamma=trial))
            if P_trial is not None:
                break
            ratio = np.sqrt(ratio)
            if ratio > max_ratio:
                logger.debug(f"[InitialPolicy] Continuation stalled at level {level:g}")
                return None
        level, Pu, steps = trial, P_trial, steps + 1
        ratio = max(ratio * ratio, min_ratio)


def find_initial_policy(
    sys: SystemModel,
    cost: CostSpec,
    shifts: Tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 4.0),
) -> Tuple[np.ndarray, ValueMatrix]:
    """
    Search for an initial control gain with an initialization certificate.

    Deterministic LQR gains of (A + sigma I, B1) with weights (Q + I, R) are
    tried first. Stabilizing candidates without a certificate go through a
    continuation from a larger attenuation level down to cost.gamma.

    Args:
        sys: System matrices.
        cost: Weights and attenuation level.
        shifts: Spectral shifts sigma of the LQR candidates.

    Returns:
        (Lu, Pu) with Pu certifying Lu.

    Raises:
        PolicyNotStabilizingError: No candidate could be certified.
    """
    cost.check_against(sys)
    q_weight = cost.Q + np.eye(sys.n)
    stabilizing = []
    for shift in shifts:
        try:
            X = linalg.solve_continuous_are(sys.A + shift * np.eye(sys.n), sys.B1, q_weight, cost.R)
        except (linalg.LinAlgError, ValueError) as e:
            logger.debug(f"[InitialPolicy] CARE failed for shift {shift}: {e}")
            continue
        Lu = -linalg.solve(cost.R, sys.B1.T @ X)
        Pu = initialization_certificate(Lu, sys, cost)
        if Pu is not None:
            logger.info(LogMessages.GAME_INITIAL_POLICY.format(shift=shift, gain=np.round(Lu, 4).tolist()))
            return Lu, Pu
        logger.debug(f"[InitialPolicy] No certificate for shift {shift}")
        if is_stabilizer(Gains(Lu, np.zeros((sys.m2, sys.n))), sys):
            stabilizing.append(Lu)

    for Lu in stabilizing:
        found = _lower_attenuation(Lu, sys, cost)
        if found is not None:
            return found
    raise PolicyNotStabilizingError("No initial control gain with an initialization certificate was found")


def initialization_gap(Lu: np.ndarray, Pu: ValueMatrix, sys: SystemModel, cost: CostSpec) -> float:
    """Largest eigenvalue of the initialization inequality's left side (<= 0 when satisfied)"""
    Lu = np.atleast_2d(np.asarray(Lu, dtype=float))
    Pu = symmetrize(Pu, "initial_Pu")
    X, Z = sys.closed_loop(Lu, np.zeros((sys.m2, sys.n)))
    lhs = (
        X.T @ Pu + Pu @ X + Z.T @ Pu @ Z + cost.Q
        + Pu @ sys.B2 @ sys.B2.T @ Pu / cost.gamma ** 2
        + Lu.T @ cost.R @ Lu
    )
    return float(linalg.eigvalsh(0.5 * (lhs + lhs.T))[-1])
