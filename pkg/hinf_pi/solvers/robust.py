"""
Two-loop policy iteration with an additive disturbance dM on the block matrix
M(P) after every policy evaluation, and the bookkeeping used to measure its
input-to-state stability: error series against the saddle value, induced
disturbance-gain errors, and error envelopes over disturbance magnitudes.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from hinf_pi.game import (
    CostSpec,
    GameBlockMatrix,
    Gains,
    SystemModel,
    ValueMatrix,
    assemble_M,
    checked_solve,
    is_stabilizer,
)
from hinf_pi.solvers.exact_pi import (
    Evaluation,
    PiConfig,
    PiTrace,
    PolicyIteration,
    evaluation_residual,
    policy_evaluation,
    run_model_based_pi,
)
from hinf_pi.tools.simulate import STREAMS
from hinf_pi.utils.errors import PolicyNotStabilizingError
from hinf_pi.utils.logger import logger
from hinf_pi.utils.messages import LogMessages

DisturbanceMode = Literal["zero", "constant_random", "decaying", "per_iteration_random"]

# Error allowed per unit of disturbance magnitude at the smallest tested magnitude
VANISHING_GAIN = 10.0


class DisturbanceSpec(BaseModel):
    mode: DisturbanceMode = Field("zero", description="How dM is generated across evaluations")
    magnitude: float = Field(0.0, ge=0, description="Frobenius norm of each dM")
    decay_rate: float = Field(0.5, gt=0, lt=1, description="Per-evaluation factor of the decaying mode")
    seed: int = Field(0, ge=0, description="Seed of the disturbance stream")


class DisturbanceGenerator:
    """
    Symmetric dM of exact Frobenius norm. constant_random repeats one random
    direction; per_iteration_random draws a fresh one per evaluation; decaying
    draws fresh directions scaled by magnitude * rate^j, with j >= 1 the inner
    index of the evaluation.
    """

    def __init__(self, spec: DisturbanceSpec, size: int):
        self.spec = spec
        self.size = size
        self._rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(STREAMS["disturbance"],)))
        self._direction = self._unit() if spec.mode == "constant_random" else None

    def _unit(self) -> np.ndarray:
        G = self._rng.standard_normal((self.size, self.size))
        S = G + G.T
        return S / np.linalg.norm(S)

    def draw(self, k: int, j: int) -> np.ndarray:
        spec = self.spec
        if spec.mode == "zero" or spec.magnitude == 0:
            return np.zeros((self.size, self.size))
        if spec.mode == "constant_random":
            return spec.magnitude * self._direction
        if spec.mode == "decaying":
            return spec.magnitude * spec.decay_rate ** j * self._unit()
        return spec.magnitude * self._unit()


def perturbed_evaluation(
    Lu_hat: np.ndarray, Lv_hat: np.ndarray, sys: SystemModel, cost: CostSpec, dM: np.ndarray
) -> Tuple[GameBlockMatrix, ValueMatrix]:
    """Exact evaluation of (Lu_hat, Lv_hat), then M_hat = M(P_hat) + dM"""
    P_hat = policy_evaluation(Lu_hat, Lv_hat, sys, cost)
    return assemble_M(P_hat, sys, cost) + dM, P_hat


def perturbed_improvement(M_hat: GameBlockMatrix) -> Gains:
    """Lu = -[M]_uu^-1 [M]_ux,  Lv = -[M]_vv^-1 [M]_vx"""
    Lu = -checked_solve(M_hat.uu, M_hat.ux, "[M]_uu (disturbance too large)")
    Lv = -checked_solve(M_hat.vv, M_hat.vx, "[M]_vv (disturbance too large)")
    return Gains(Lu, Lv)


class RobustPolicyIteration(PolicyIteration):
    """
    The exact two-loop iteration driven by perturbed block matrices. Runs are
    non-strict: destabilization, singular blocks and caps end the run with a
    recorded termination reason.
    """

    label = "robust"
    outer_criterion = "gain"
    strict = False

    def __init__(self, sys: SystemModel, cost: CostSpec, cfg: PiConfig, dist: DisturbanceSpec):
        cost.check_against(sys)
        super().__init__(sys.n, sys.m2, cost, cfg)
        self.sys = sys
        self.dist = dist
        self.generator = DisturbanceGenerator(dist, sys.n + sys.m1 + sys.m2)
        check = is_stabilizer(Gains(cfg.initial_Lu, np.zeros((sys.m2, sys.n))), sys)
        if not check:
            raise PolicyNotStabilizingError(
                "Initial control gain (Lu, 0) is not a mean-square stabilizer", abscissa=check.abscissa
            )

    def check_policy(self, Lu: np.ndarray, Lv: np.ndarray, k: int, j: int) -> float:
        check = is_stabilizer(Gains(Lu, Lv), self.sys)
        if not check:
            raise PolicyNotStabilizingError(
                "Perturbed policy pair lost mean-square stability", iteration=(k, j), abscissa=check.abscissa
            )
        return check.abscissa

    def evaluate(self, Lu: np.ndarray, Lv: np.ndarray, k: int, j: int) -> Evaluation:
        dM = self.generator.draw(k, j)
        M_hat, P_hat = perturbed_evaluation(Lu, Lv, self.sys, self.cost, dM)
        gains = perturbed_improvement(M_hat)
        return Evaluation(
            P=P_hat,
            Lu_next=gains.Lu,
            Lv_next=gains.Lv,
            residual=evaluation_residual(P_hat, Lu, Lv, self.sys, self.cost),
            extras={"dM_norm": float(np.linalg.norm(dM))},
        )


@dataclass
class IssReport:
    magnitude: float
    seed: int
    mode: str
    errors: List[float] = field(default_factory=list)
    stabilizer_ok: List[bool] = field(default_factory=list)
    final_error: float = float("nan")
    violations: int = 0
    lv_disturbance: List[float] = field(default_factory=list)
    trace_gap: List[float] = field(default_factory=list)
    termination: str = "running"

    @property
    def diverged(self) -> bool:
        return self.termination in ("destabilized", "singular_block") or not np.isfinite(self.final_error)

    def csv_rows(self) -> List[list]:
        return [
            [self.magnitude, self.seed, i + 1, err, int(ok)]
            for i, (err, ok) in enumerate(zip(self.errors, self.stabilizer_ok))
        ]


def reference_value(sys: SystemModel, cost: CostSpec, cfg: PiConfig) -> ValueMatrix:
    """
    Saddle value from the exact iteration at tight tolerances.

    Args:
        sys: System matrices.
        cost: Weights and attenuation level.
        cfg: Iteration settings; the tolerances and caps are overridden.

    Returns:
        The converged value matrix, the ground truth of every ISS error.
    """
    tight = cfg.model_copy(update={"eps_inner": 1e-9, "eps_outer": 1e-9, "max_inner": 200, "max_outer": 100})
    return run_model_based_pi(sys, cost, tight).P


def build_report(trace: PiTrace, reference: ValueMatrix, sys: SystemModel, cost: CostSpec, dist: DisturbanceSpec) -> IssReport:
    """
    Summarize a perturbed run against the reference value.

    Args:
        trace: Iterates of the perturbed run.
        reference: Saddle value.
        sys: System matrices, for the disturbance-gain shift.
        cost: Weights and attenuation level.
        dist: Disturbance settings of the run.

    Returns:
        Per-iteration errors and stabilizer flags, the outer-loop shifts of
        the disturbance gain and the final error.
    """
    report = IssReport(dist.magnitude, dist.seed, dist.mode, termination=trace.termination)
    report.errors = [float(np.linalg.norm(r.P - reference)) for r in trace.records]
    report.stabilizer_ok = [bool(r.abscissa < 0) for r in trace.records]
    report.violations = int(trace.termination == "destabilized") + sum(not ok for ok in report.stabilizer_ok)
    report.final_error = float(np.linalg.norm(trace.P - reference)) if trace.P is not None else float("nan")
    for outer in trace.outer:
        induced = outer.Lv - sys.B2.T @ outer.P / cost.gamma ** 2
        report.lv_disturbance.append(float(np.linalg.norm(induced)))
        report.trace_gap.append(float(np.trace(reference - outer.P)))
    return report


def run_robust_pi(
    sys: SystemModel,
    cost: CostSpec,
    cfg: PiConfig,
    dist: DisturbanceSpec,
    reference: Optional[ValueMatrix] = None,
) -> Tuple[PiTrace, IssReport]:
    """
    One perturbed run.

    Returns:
        The trace and its report. The reference is computed when not given.
    """
    if reference is None:
        reference = reference_value(sys, cost, cfg)
    trace = RobustPolicyIteration(sys, cost, cfg, dist).run()
    report = build_report(trace, reference, sys, cost, dist)
    logger.info(LogMessages.ROBUST_RUN_DONE.format(
        mode=dist.mode, magnitude=dist.magnitude, seed=dist.seed,
        termination=report.termination, error=report.final_error,
    ))
    return trace, report


def run_iss_sweep(
    sys: SystemModel,
    cost: CostSpec,
    cfg: PiConfig,
    magnitudes: Sequence[float],
    seeds: Sequence[int],
    mode: DisturbanceMode = "constant_random",
    workers: int = 1,
    decay_rate: float = 0.5,
    reference: Optional[ValueMatrix] = None,
) -> List[IssReport]:
    """
    Independent perturbed runs over a magnitude x seed grid.

    Args:
        magnitudes: Frobenius norms of the disturbance.
        seeds: Disturbance seeds, one run per magnitude and seed.
        mode: How the disturbance evolves across evaluations.
        workers: Threads running the grid. The result does not depend on it.
        decay_rate: Factor of the decaying mode.
        reference: Saddle value; computed once when not given.

    Returns:
        Reports in (magnitude, seed) order.
    """
    if reference is None:
        reference = reference_value(sys, cost, cfg)
    specs = [
        DisturbanceSpec(mode=mode, magnitude=magnitude, decay_rate=decay_rate, seed=seed)
        for magnitude in magnitudes
        for seed in seeds
    ]
    logger.info(LogMessages.ROBUST_SWEEP_START.format(runs=len(specs), mode=mode, workers=workers))
    job = lambda spec: run_robust_pi(sys, cost, cfg, spec, reference)[1]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, specs))
    return [job(spec) for spec in specs]


@dataclass
class EnvelopeRow:
    magnitude: float
    max_error: float
    runs: int
    excluded: int


@dataclass
class IssEnvelope:
    rows: List[EnvelopeRow]
    monotone: bool
    vanishing: bool

    def as_dict(self) -> Dict[float, float]:
        return {row.magnitude: row.max_error for row in self.rows}


def iss_envelope(reports: List[IssReport], floor: float = 0.0) -> IssEnvelope:
    """
    Max final error over seeds per magnitude; diverged runs are excluded.

    Args:
        reports: One report per (magnitude, seed), at least two magnitudes
            and three seeds each.
        floor: Error reached without any disturbance, usually a multiple of
            the solver tolerance.

    Returns:
        The envelope rows with two flags: monotone (non-decreasing in the
        magnitude) and vanishing (the smallest magnitude keeps the error
        below VANISHING_GAIN * magnitude + floor).
    """
    by_magnitude: Dict[float, List[IssReport]] = {}
    for report in reports:
        by_magnitude.setdefault(report.magnitude, []).append(report)
    if len(by_magnitude) < 2:
        raise ValueError("The envelope needs at least two magnitudes")
    if min(len(group) for group in by_magnitude.values()) < 3:
        raise ValueError("The envelope needs at least three seeds per magnitude")

    rows = []
    for magnitude in sorted(by_magnitude):
        group = by_magnitude[magnitude]
        kept = [r for r in group if not r.diverged]
        for r in group:
            if r.diverged:
                logger.warning(LogMessages.ROBUST_EXCLUDED.format(magnitude=magnitude, seed=r.seed, termination=r.termination))
        max_error = max((r.final_error for r in kept), default=float("nan"))
        rows.append(EnvelopeRow(magnitude, max_error, len(kept), len(group) - len(kept)))

    finite = [row.max_error for row in rows if np.isfinite(row.max_error)]
    monotone = all(b >= a for a, b in zip(finite, finite[1:]))
    if not monotone:
        logger.warning(LogMessages.ROBUST_NOT_MONOTONE.format(table=[(r.magnitude, r.max_error) for r in rows]))
    smallest = rows[0]
    vanishing = bool(smallest.max_error <= VANISHING_GAIN * smallest.magnitude + floor)
    if not vanishing:
        logger.warning(LogMessages.ROBUST_NOT_VANISHING.format(magnitude=smallest.magnitude, error=smallest.max_error))
    return IssEnvelope(rows, monotone, vanishing)
