"""
Model-free two-loop policy iteration.

Every policy evaluation is a least-squares problem Phi theta = Theta built
from one fixed set of data moments; theta stacks svec(P), vec(B1'P + D'PC),
vec(B2'P) and svec(D'PD). The system matrices are never read.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as linalg

from hinf_pi.game import CostSpec, checked_solve
from hinf_pi.matops import gain_quadratic_map, mat, smat, svec_size, vec
from hinf_pi.solvers.exact_pi import Evaluation, PiConfig, PiTrace, PolicyIteration
from hinf_pi.tools.simulate import DataMoments, regression_unknowns
from hinf_pi.utils.errors import RankDeficientError
from hinf_pi.utils.logger import logger
from hinf_pi.utils.messages import LogMessages

RANK_TOL = 1e-8


@dataclass(frozen=True)
class RegressionSystem:
    Phi: np.ndarray
    Theta: np.ndarray
    n: int
    m1: int
    m2: int

    @property
    def unknowns(self) -> int:
        return regression_unknowns(self.n, self.m1, self.m2)


@dataclass(frozen=True)
class LsEstimate:
    P_hat: np.ndarray
    B1_tilde_hat: np.ndarray
    B2_tilde_hat: np.ndarray
    D_tilde_hat: np.ndarray
    condition_number: float
    residual_norm: float


@dataclass(frozen=True)
class RankCheck:
    full_rank: bool
    rank: int
    required: int

    def __bool__(self) -> bool:
        return self.full_rank


def _numerical_rank(M: np.ndarray) -> Tuple[int, np.ndarray]:
    sv = linalg.svdvals(M)
    if sv.size == 0 or sv[0] == 0:
        return 0, sv
    return int(np.sum(sv > RANK_TOL * sv[0])), sv


def check_rank(data: DataMoments) -> RankCheck:
    """Rank of [I_xx, I_xu, I_xv, delta_uu] against the number of unknowns"""
    rank, _ = _numerical_rank(np.hstack([data.I_xx, data.I_xu, data.I_xv, data.delta_uu]))
    return RankCheck(rank == data.unknowns, rank, data.unknowns)


def assemble_regression(data: DataMoments, Lu: np.ndarray, Lv: np.ndarray, cost: CostSpec) -> RegressionSystem:
    """
    Phi = [delta_xx | 2 I_xx (I (x) Lu') - 2 I_xu | 2 I_xx (I (x) Lv') - 2 I_xv | I_xx Lbar_u - delta_uu]
    Theta = -I_xx vec(Lu'R Lu + Q - gamma^2 Lv'Lv)
    """
    n, m1, m2 = data.n, data.m1, data.m2
    Lu = np.atleast_2d(np.asarray(Lu, dtype=float))
    Lv = np.atleast_2d(np.asarray(Lv, dtype=float))
    if Lu.shape != (m1, n) or Lv.shape != (m2, n):
        raise ValueError(f"Gains must be {m1}x{n} and {m2}x{n}, got {Lu.shape} and {Lv.shape}")
    if cost.Q.shape != (n, n) or cost.R.shape != (m1, m1):
        raise ValueError(f"Cost weights do not match the data dimensions n={n}, m1={m1}")

    I_n = np.eye(n)
    Phi = np.hstack([
        data.delta_xx,
        2.0 * data.I_xx @ np.kron(I_n, Lu.T) - 2.0 * data.I_xu,
        2.0 * data.I_xx @ np.kron(I_n, Lv.T) - 2.0 * data.I_xv,
        data.I_xx @ gain_quadratic_map(Lu.T) - data.delta_uu,
    ])
    Theta = -data.I_xx @ vec(cost.stage_weight(Lu, Lv))
    return RegressionSystem(Phi, Theta, n, m1, m2)


def least_squares_step(reg: RegressionSystem) -> LsEstimate:
    """Column-pivoted QR solve of min |Phi theta - Theta|, unpacked into the four blocks"""
    p = reg.unknowns
    rank, sv = _numerical_rank(reg.Phi)
    if rank < p:
        raise RankDeficientError(rank, p)

    Q, R, perm = linalg.qr(reg.Phi, mode="economic", pivoting=True)
    theta = np.empty(p)
    theta[perm] = linalg.solve_triangular(R, Q.T @ reg.Theta)

    n, m1, m2 = reg.n, reg.m1, reg.m2
    sizes = [svec_size(n), m1 * n, m2 * n, svec_size(m1)]
    p_block, b1_block, b2_block, d_block = np.split(theta, np.cumsum(sizes)[:-1])
    return LsEstimate(
        P_hat=smat(p_block, n),
        B1_tilde_hat=mat(b1_block, (m1, n)),
        B2_tilde_hat=mat(b2_block, (m2, n)),
        D_tilde_hat=smat(d_block, m1),
        condition_number=float(sv[0] / sv[-1]),
        residual_norm=float(np.linalg.norm(reg.Phi @ theta - reg.Theta)),
    )


class ModelFreePolicyIteration(PolicyIteration):
    """
    Inner loop: least-squares evaluation, then Lu <- -(R + D~)^-1 B1~.
    Outer loop: Lv <- gamma^-2 B2~, stopped on the step of Lv.
    """

    label = "model_free"
    outer_criterion = "gain"
    strict = True

    def __init__(self, data: DataMoments, cost: CostSpec, cfg: PiConfig):
        if cost.Q.shape != (data.n, data.n) or cost.R.shape != (data.m1, data.m1):
            raise ValueError(f"Cost weights do not match the data dimensions n={data.n}, m1={data.m1}")
        if cfg.initial_Lu.shape != (data.m1, data.n):
            raise ValueError(f"initial_Lu must be {data.m1}x{data.n}, got {cfg.initial_Lu.shape}")
        super().__init__(data.n, data.m2, cost, cfg)
        check = check_rank(data)
        if not check:
            raise RankDeficientError(check.rank, check.required)
        logger.info(LogMessages.ADP_RANK_OK.format(rank=check.rank, rows=data.n_rows))
        self.data = data
        self.last_estimate: Optional[LsEstimate] = None

    def evaluate(self, Lu: np.ndarray, Lv: np.ndarray, k: int, j: int) -> Evaluation:
        estimate = least_squares_step(assemble_regression(self.data, Lu, Lv, self.cost))
        Lu_next = -checked_solve(self.cost.R + estimate.D_tilde_hat, estimate.B1_tilde_hat, "R + D~")
        return Evaluation(
            P=estimate.P_hat,
            Lu_next=Lu_next,
            Lv_next=estimate.B2_tilde_hat / self.cost.gamma ** 2,
            residual=estimate.residual_norm,
            condition=estimate.condition_number,
            extras={"estimate": estimate},
        )

    def on_record(self, record, evaluation: Evaluation):
        self.last_estimate = evaluation.extras["estimate"]


def run_model_free_pi(data: DataMoments, cost: CostSpec, cfg: PiConfig) -> Tuple[PiTrace, LsEstimate]:
    """
    Least-squares policy iteration on one batch of behavior data.

    Args:
        data: Moment blocks of the behavior run.
        cost: Weights and attenuation level. No system matrix is needed.
        cfg: Iteration settings; initial_Lu must be given.

    Returns:
        The trace and the last least-squares estimate.

    Raises:
        RankDeficientError: The data does not identify the unknowns.
    """
    solver = ModelFreePolicyIteration(data, cost, cfg)
    trace = solver.run()
    return trace, solver.last_estimate
