"""
Model-based two-loop policy iteration for the stochastic zero-sum game.

The inner loop alternates policy evaluation (a stochastic Lyapunov equation)
and improvement of the control gain for a frozen disturbance gain; the outer
loop updates the disturbance gain from the converged inner value. The
`PolicyIteration` skeleton is shared with the model-free and perturbed variants.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from hinf_pi.game import (
    CostSpec,
    Gains,
    SystemModel,
    ValueMatrix,
    initialization_gap,
    is_stabilizer,
    gare_residual,
    saddle_gains,
)
from hinf_pi.matops import LyapunovOperands, lyapunov_apply, solve_stochastic_lyapunov, svec
from hinf_pi.utils.errors import IterationLimitError, PolicyNotStabilizingError, SingularBlockError
from hinf_pi.utils.logger import logger
from hinf_pi.utils.messages import LogMessages


class PiConfig(BaseModel):
    """Stopping rules, caps and initial policy of the two-loop iteration"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    eps_inner: float = Field(1e-5, gt=0, description="Inner stop on the Frobenius step of P")
    eps_outer: float = Field(1e-5, gt=0, description="Outer stop (on P_v or on L_v, per algorithm)")
    max_inner: int = Field(200, ge=1, description="Inner iteration cap")
    max_outer: int = Field(100, ge=1, description="Outer iteration cap")
    initial_Lu: np.ndarray = Field(..., description="Stabilizing initial control gain (m1 x n)")
    initial_Pu: Optional[np.ndarray] = Field(None, description="Optional certificate for the initialization inequality")

    @field_validator("initial_Lu", "initial_Pu", mode="before")
    @classmethod
    def _as_matrix(cls, v):
        if v is None:
            return None
        return np.atleast_2d(np.asarray(v, dtype=float))


@dataclass
class IterationRecord:
    """One policy evaluation (k, j): P^{(k,j)} computed from the pair (Lu, Lv)"""
    k: int
    j: int
    P: np.ndarray
    Lu: np.ndarray
    Lv: np.ndarray
    step: float
    residual: float
    abscissa: float = float("nan")
    condition: float = float("nan")


@dataclass
class OuterRecord:
    k: int
    P: np.ndarray
    Lv: np.ndarray
    step: float
    inner_iterations: int
    inner_converged: bool


@dataclass
class PiTrace:
    label: str
    records: List[IterationRecord] = field(default_factory=list)
    outer: List[OuterRecord] = field(default_factory=list)
    P: Optional[np.ndarray] = None
    gains: Optional[Gains] = None
    termination: str = "running"

    @property
    def inner_count(self) -> int:
        return len(self.records)

    @property
    def outer_count(self) -> int:
        return len(self.outer)

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    def inner_sequence(self, k: int) -> List[np.ndarray]:
        return [r.P for r in self.records if r.k == k]

    def outer_sequence(self) -> List[np.ndarray]:
        return [o.P for o in self.outer]

    def csv_header(self) -> List[str]:
        q = len(svec(self.records[0].P)) if self.records else 0
        return ["k", "j"] + [f"p_{i}" for i in range(q)] + ["step", "residual", "abscissa", "condition"]

    def csv_rows(self) -> List[list]:
        return [
            [r.k, r.j, *svec(r.P).tolist(), r.step, r.residual, r.abscissa, r.condition]
            for r in self.records
        ]


@dataclass
class Evaluation:
    P: np.ndarray
    Lu_next: np.ndarray
    Lv_next: np.ndarray
    residual: float
    condition: float = float("nan")
    extras: Dict = field(default_factory=dict)


class PolicyIteration:
    """
    Two-loop iteration skeleton. Subclasses provide `evaluate` (and optionally
    `check_policy`). `outer_criterion` is "value" (stop on P_v steps) or
    "gain" (stop on L_v steps). With `strict` unset, destabilization, singular
    blocks and iteration caps end the run with a recorded termination reason.
    """

    label = "policy_iteration"
    outer_criterion = "value"
    strict = True

    def __init__(self, n: int, m2: int, cost: CostSpec, cfg: PiConfig):
        self.n = n
        self.m2 = m2
        self.cost = cost
        self.cfg = cfg

    def check_policy(self, Lu: np.ndarray, Lv: np.ndarray, k: int, j: int) -> float:
        return float("nan")

    def evaluate(self, Lu: np.ndarray, Lv: np.ndarray, k: int, j: int) -> Evaluation:
        raise NotImplementedError

    def on_record(self, record: IterationRecord, evaluation: Evaluation):
        pass

    def run(self) -> PiTrace:
        trace = PiTrace(self.label)
        logger.info(LogMessages.PI_START.format(label=self.label))
        try:
            self._iterate(trace)
        except (PolicyNotStabilizingError, SingularBlockError, IterationLimitError) as e:
            if self.strict:
                raise
            trace.termination = {
                PolicyNotStabilizingError: "destabilized",
                SingularBlockError: "singular_block",
                IterationLimitError: "iteration_cap",
            }[type(e)]
            if trace.records and trace.P is None:
                trace.P = trace.records[-1].P
            logger.warning(LogMessages.PI_STOPPED.format(label=self.label, reason=trace.termination, error=e))
        return trace

    def _iterate(self, trace: PiTrace):
        cfg = self.cfg
        Lv = np.zeros((self.m2, self.n))
        P_v_prev = None

        for k in range(1, cfg.max_outer + 1):
            Lu = cfg.initial_Lu.copy()
            P_prev = None
            evaluation = None
            inner_converged = False
            j = 0
            for j in range(1, cfg.max_inner + 1):
                abscissa = self.check_policy(Lu, Lv, k, j)
                evaluation = self.evaluate(Lu, Lv, k, j)
                step = float("inf") if P_prev is None else float(np.linalg.norm(evaluation.P - P_prev))
                record = IterationRecord(
                    k, j, evaluation.P, Lu, Lv, step, evaluation.residual, abscissa, evaluation.condition
                )
                trace.records.append(record)
                self.on_record(record, evaluation)
                logger.debug(f"[{self.label}] k={k} j={j} step={step:.3e} residual={evaluation.residual:.3e}")

                Lu = evaluation.Lu_next
                P_prev = evaluation.P
                if step <= cfg.eps_inner:
                    inner_converged = True
                    break

            if not inner_converged:
                message = LogMessages.PI_INNER_CAP.format(label=self.label, k=k, cap=cfg.max_inner)
                if self.strict:
                    raise IterationLimitError(message)
                logger.warning(message)

            Lv_next = evaluation.Lv_next
            if self.outer_criterion == "value":
                outer_step = float("inf") if P_v_prev is None else float(np.linalg.norm(P_prev - P_v_prev))
            else:
                outer_step = float(np.linalg.norm(Lv_next - Lv))
            trace.outer.append(OuterRecord(k, P_prev, Lv_next, outer_step, j, inner_converged))
            logger.info(LogMessages.PI_OUTER_STEP.format(label=self.label, k=k, inner=j, step=outer_step))

            Lv = Lv_next
            P_v_prev = P_prev
            trace.P = P_prev
            trace.gains = Gains(Lu, Lv)
            if outer_step <= cfg.eps_outer:
                trace.termination = "converged"
                logger.info(LogMessages.PI_CONVERGED.format(label=self.label, outer=k, inner=trace.inner_count))
                return

        raise IterationLimitError(LogMessages.PI_OUTER_CAP.format(label=self.label, cap=cfg.max_outer))


def policy_evaluation(Lu: np.ndarray, Lv: np.ndarray, sys: SystemModel, cost: CostSpec) -> ValueMatrix:
    """
    Solve (A + B1 Lu + B2 Lv)'P + P(A + B1 Lu + B2 Lv) + (C + D Lu)'P(C + D Lu)
          + Lu'R Lu + Q - gamma^2 Lv'Lv = 0
    """
    X, Z = sys.closed_loop(Lu, Lv)
    return solve_stochastic_lyapunov(LyapunovOperands(X, Z, cost.stage_weight(Lu, Lv)))


def policy_improvement(P: ValueMatrix, sys: SystemModel, cost: CostSpec) -> np.ndarray:
    """Lu = -(R + D'PD)^-1 (B1'P + D'PC)"""
    return saddle_gains(P, sys, cost).Lu


def disturbance_update(P: ValueMatrix, sys: SystemModel, cost: CostSpec) -> np.ndarray:
    """Lv = gamma^-2 B2'P"""
    return sys.B2.T @ P / cost.gamma ** 2


def evaluation_residual(P: ValueMatrix, Lu: np.ndarray, Lv: np.ndarray, sys: SystemModel, cost: CostSpec) -> float:
    X, Z = sys.closed_loop(Lu, Lv)
    return float(np.linalg.norm(lyapunov_apply(X, Z, P) + cost.stage_weight(Lu, Lv)))


class ModelBasedPolicyIteration(PolicyIteration):
    """Exact two-loop iteration with the system matrices known"""

    label = "model_based"
    outer_criterion = "value"
    strict = True

    def __init__(self, sys: SystemModel, cost: CostSpec, cfg: PiConfig):
        cost.check_against(sys)
        super().__init__(sys.n, sys.m2, cost, cfg)
        self.sys = sys
        Gains(cfg.initial_Lu, np.zeros((sys.m2, sys.n))).check_against(sys)
        self._check_initialization()

    def _check_initialization(self):
        sys, cfg = self.sys, self.cfg
        check = is_stabilizer(Gains(cfg.initial_Lu, np.zeros((sys.m2, sys.n))), sys)
        if not check:
            raise PolicyNotStabilizingError(
                "Initial control gain (Lu, 0) is not a mean-square stabilizer", abscissa=check.abscissa
            )
        if cfg.initial_Pu is not None:
            gap = initialization_gap(cfg.initial_Lu, cfg.initial_Pu, sys, self.cost)
            if gap > 1e-8:
                logger.warning(LogMessages.PI_INIT_INEQUALITY.format(gap=gap))

    def check_policy(self, Lu: np.ndarray, Lv: np.ndarray, k: int, j: int) -> float:
        check = is_stabilizer(Gains(Lu, Lv), self.sys)
        if not check:
            raise PolicyNotStabilizingError(
                "Policy pair lost mean-square stability", iteration=(k, j), abscissa=check.abscissa
            )
        return check.abscissa

    def evaluate(self, Lu: np.ndarray, Lv: np.ndarray, k: int, j: int) -> Evaluation:
        try:
            P = policy_evaluation(Lu, Lv, self.sys, self.cost)
        except PolicyNotStabilizingError as e:
            raise PolicyNotStabilizingError(str(e), iteration=(k, j)) from e
        return Evaluation(
            P=P,
            Lu_next=policy_improvement(P, self.sys, self.cost),
            Lv_next=disturbance_update(P, self.sys, self.cost),
            residual=evaluation_residual(P, Lu, Lv, self.sys, self.cost),
        )


def run_model_based_pi(sys: SystemModel, cost: CostSpec, cfg: PiConfig) -> PiTrace:
    """
    Model-based two-loop iteration followed by the GARE residual check.

    Returns:
        The trace of inner and outer iterates; trace.P is the final value.
    """
    trace = ModelBasedPolicyIteration(sys, cost, cfg).run()
    residual = float(np.linalg.norm(gare_residual(trace.P, sys, cost)))
    bound = 1e-6 * (1.0 + np.linalg.norm(cost.Q))
    if residual > bound:
        logger.warning(LogMessages.PI_GARE_RESIDUAL.format(residual=residual, bound=bound))
    else:
        logger.info(LogMessages.PI_GARE_OK.format(residual=residual))
    return trace
