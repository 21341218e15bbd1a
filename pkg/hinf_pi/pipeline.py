import hashlib
import os
from typing import Dict, Optional, Tuple

import numpy as np
import pydantic
import scipy

import hinf_pi
from hinf_pi.config import ExperimentConfig
from hinf_pi.game import CostSpec, Gains, SystemModel, find_initial_policy, gare_residual
from hinf_pi.solvers.adp import run_model_free_pi
from hinf_pi.solvers.exact_pi import PiConfig, PiTrace, run_model_based_pi
from hinf_pi.solvers.robust import iss_envelope, run_iss_sweep
from hinf_pi.tools.simulate import DataMoments, collect_behavior_data, simulate_closed_loop
from hinf_pi.utils.logger import logger
from hinf_pi.utils.messages import LogMessages
from hinf_pi.utils.result_writer import (
    EnvelopeEntry,
    ResultWriter,
    RunManifest,
    RunSummary,
    SeedResult,
    as_matrix,
)


# The model-based reference is the ground truth of every error column
REFERENCE_EPS = 1e-9
# Error left by the solver tolerance, in multiples of the larger epsilon
ISS_FLOOR_FACTOR = 10.0


class ExperimentPipeline:
    """
    Runs one validated experiment: computes what the mode asks for, writes
    traces, a JSON summary and a manifest below `output_dir`.

    Data-driven modes run in two phases. `collect_phase` is the only step that
    touches the system matrices; `strip_system` then drops them, and
    `model_free_phase` works from the data moments and the cost alone.
    """

    def __init__(self, cfg: ExperimentConfig, output_dir: str, workers: int = 1):
        logger.info(LogMessages.PIPELINE_INIT.format(mode=cfg.mode))
        self.cfg = cfg
        self.workers = workers
        self.writer = ResultWriter(output_dir)
        self.system: Optional[SystemModel] = cfg.system.build() if cfg.system is not None else None
        self.cost: CostSpec = cfg.cost.build()
        self.published = np.array(cfg.published_P, dtype=float) if cfg.published_P is not None else None
        self.reference: Optional[np.ndarray] = None
        self.checks: Dict[str, bool] = {}
        self._initial: Optional[Tuple[np.ndarray, Optional[np.ndarray]]] = None
        self.config_hash = config_hash(cfg)

    # ----- shared steps -----

    def initial_policy(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        if self._initial is None:
            pi = self.cfg.pi
            if pi.initial_lu is not None:
                Pu = np.array(pi.initial_pu, dtype=float) if pi.initial_pu is not None else None
                self._initial = (np.atleast_2d(np.array(pi.initial_lu, dtype=float)), Pu)
            else:
                self._initial = find_initial_policy(self._require_system(), self.cost)
        return self._initial

    def pi_config(self, **overrides) -> PiConfig:
        Lu, Pu = self.initial_policy()
        cfg = self.cfg.pi.build(Lu, Pu)
        return cfg.model_copy(update=overrides) if overrides else cfg

    def _require_system(self) -> SystemModel:
        if self.system is None:
            raise ValueError("This step needs the system matrices, which are not available")
        return self.system

    def _check(self, name: str, result: bool):
        self.checks[name] = bool(result)
        logger.info(LogMessages.PIPELINE_CHECK.format(name=name, result="pass" if result else "FAIL"))

    def _published_error(self, P: Optional[np.ndarray]) -> Optional[float]:
        if self.published is None or P is None:
            return None
        return float(np.linalg.norm(P - self.published))

    # ----- phases -----

    def reference_phase(self, summary: RunSummary) -> PiTrace:
        logger.info(LogMessages.PIPELINE_REFERENCE)
        sys = self._require_system()
        pi = self.cfg.pi
        cfg = self.pi_config(eps_inner=min(pi.eps_inner, REFERENCE_EPS), eps_outer=min(pi.eps_outer, REFERENCE_EPS))
        trace = run_model_based_pi(sys, self.cost, cfg)
        self.reference = trace.P
        self.writer.write_trace("model_based_trace", trace, reference=trace.P)

        residual = float(np.linalg.norm(gare_residual(trace.P, sys, self.cost)))
        summary.reference_P = as_matrix(trace.P)
        summary.reference_Lu = as_matrix(trace.gains.Lu)
        summary.reference_Lv = as_matrix(trace.gains.Lv)
        summary.reference_outer_iterations = trace.outer_count
        summary.gare_residual = residual
        self._check("gare_residual_ok", residual <= 1e-6 * (1.0 + np.linalg.norm(self.cost.Q)))
        if self.published is not None:
            deviation = float(np.max(np.abs(trace.P - self.published)))
            summary.published_max_deviation = deviation
            self._check("reference_error_ok", deviation <= self.cfg.published_tolerance)
        return trace

    def collect_phase(self, seed: int) -> DataMoments:
        if self.cfg.data_file:
            logger.info(LogMessages.PIPELINE_DATA_FILE.format(path=self.cfg.data_file))
            if self.cfg.data_file.endswith(".csv"):
                return DataMoments.from_csv(self.cfg.data_file)
            return DataMoments.load(self.cfg.data_file)

        logger.info(LogMessages.PIPELINE_COLLECT.format(seed=seed))
        Lu, _ = self.initial_policy()
        sim = self.cfg.sim.build(seed, self.workers)
        data = collect_behavior_data(self._require_system(), Lu, sim, self.cost)
        self.writer.write_moments(f"seed_{seed}/moments.csv", data)
        return data

    def strip_system(self) -> Optional[SystemModel]:
        """
        Withhold the system matrices from everything that follows. The
        returned model is only used as the simulated plant.
        """
        self.initial_policy()
        plant, self.system = self.system, None
        self.cfg = self.cfg.model_copy(update={"system": None})
        return plant

    def model_free_phase(self, data: DataMoments, seed: int) -> Tuple[PiTrace, SeedResult]:
        logger.info(LogMessages.PIPELINE_MODEL_FREE)
        trace, _ = run_model_free_pi(data, self.cost, self.pi_config())
        self.writer.write_trace(f"seed_{seed}/model_free_trace", trace, reference=self.reference)
        result = SeedResult(
            seed=seed,
            P=as_matrix(trace.P),
            Lu=as_matrix(trace.gains.Lu),
            Lv=as_matrix(trace.gains.Lv),
            inner_iterations=trace.inner_count,
            outer_iterations=trace.outer_count,
            termination=trace.termination,
            error_vs_reference=float(np.linalg.norm(trace.P - self.reference)) if self.reference is not None else None,
            error_vs_published=self._published_error(trace.P),
            max_condition=float(max(r.condition for r in trace.records)),
        )
        return trace, result

    def closed_loop_phase(self, sys: SystemModel, gains: Gains, seed: int) -> float:
        sim = self.cfg.sim.build_closed_loop(seed, self.workers)
        stats = simulate_closed_loop(sys, gains, sim)
        self.writer.write_csv(
            f"seed_{seed}/closed_loop.csv",
            ["t", "mean_sq_norm", "std_error"],
            [[t, m, s] for t, m, s in zip(stats.times, stats.mean_sq_norm, stats.std_error)],
        )
        return stats.decay_ratio()

    @staticmethod
    def headline_error(result: SeedResult) -> Optional[float]:
        """Distance of a learned value to the tight reference, else to published_P"""
        if result.error_vs_reference is not None:
            return result.error_vs_reference
        return result.error_vs_published

    # ----- modes -----

    def run_exact(self, summary: RunSummary):
        self.reference_phase(summary)

    def run_model_free(self, summary: RunSummary, closed_loop: bool = False):
        if self.system is not None:
            self.reference_phase(summary)
        datasets = [(seed, self.collect_phase(seed)) for seed in self.cfg.seeds]
        plant = self.strip_system()
        for seed, data in datasets:
            trace, result = self.model_free_phase(data, seed)
            if closed_loop and plant is not None:
                result.decay_ratio = self.closed_loop_phase(plant, trace.gains, seed)
            summary.runs.append(result)

        errors = [e for e in map(self.headline_error, summary.runs) if e is not None]
        if errors:
            summary.median_error = float(np.median(errors))
            self._check("model_free_error_ok", summary.median_error <= self.cfg.model_free_tolerance)
        if closed_loop:
            ratios = [r.decay_ratio for r in summary.runs if r.decay_ratio is not None]
            self._check("closed_loop_decay_ok", bool(ratios) and max(ratios) <= self.cfg.decay_threshold)

    def run_robust(self, summary: RunSummary):
        self.reference_phase(summary)
        settings = self.cfg.disturbance
        cfg = self.pi_config(max_inner=settings.max_inner, max_outer=settings.max_outer)
        logger.info(LogMessages.PIPELINE_ROBUST.format(magnitudes=settings.magnitudes, seeds=self.cfg.seeds))
        reports = run_iss_sweep(
            self.system, self.cost, cfg, settings.magnitudes, self.cfg.seeds,
            mode=settings.mode, workers=self.workers, decay_rate=settings.decay_rate, reference=self.reference,
        )
        rows = [row for report in reports for row in report.csv_rows()]
        self.writer.write_csv("iss.csv", ["magnitude", "seed", "iteration", "error", "stabilizer_ok"], rows)
        self.writer.write_csv(
            "iss_outer.csv",
            ["magnitude", "seed", "k", "lv_disturbance", "trace_gap"],
            [
                [report.magnitude, report.seed, k + 1, dlv, gap]
                for report in reports
                for k, (dlv, gap) in enumerate(zip(report.lv_disturbance, report.trace_gap))
            ],
        )
        for report in reports:
            summary.runs.append(SeedResult(
                seed=report.seed,
                magnitude=report.magnitude,
                termination=report.termination,
                error_vs_reference=report.final_error,
            ))

        small = [r for r in reports if r.magnitude <= settings.stabilizing_below]
        self._check("small_disturbance_stabilizing", all(r.violations == 0 for r in small))
        if len(set(settings.magnitudes)) >= 2 and len(self.cfg.seeds) >= 3:
            envelope = iss_envelope(reports, floor=ISS_FLOOR_FACTOR * max(cfg.eps_inner, cfg.eps_outer))
            summary.envelope = [
                EnvelopeEntry(
                    magnitude=row.magnitude,
                    max_error=row.max_error if np.isfinite(row.max_error) else None,
                    runs=row.runs,
                    excluded=row.excluded,
                )
                for row in envelope.rows
            ]
            summary.envelope_monotone = envelope.monotone
            summary.envelope_vanishing = envelope.vanishing
            self._check("envelope_monotone", envelope.monotone)
            self._check("envelope_vanishing", envelope.vanishing)

    def run_reproduce(self, summary: RunSummary):
        self.run_model_free(summary, closed_loop=True)

    # ----- entry point -----

    def run(self) -> RunManifest:
        summary = RunSummary(name=self.cfg.name, mode=self.cfg.mode)
        dispatch = {
            "exact": self.run_exact,
            "model_free": self.run_model_free,
            "robust": self.run_robust,
            "reproduce_example_1": self.run_reproduce,
            "reproduce_example_2": self.run_reproduce,
        }
        dispatch[self.cfg.mode](summary)
        self.writer.write_json("summary.json", summary)

        manifest = RunManifest(
            config_hash=self.config_hash,
            seeds=self.cfg.seeds,
            mode=self.cfg.mode,
            versions=versions(),
            outputs=self.writer.outputs + ["manifest.json"],
            checks=self.checks,
        )
        self.writer.write_json("manifest.json", manifest)
        logger.info(LogMessages.PIPELINE_READY.format(path=self.writer.output_dir))
        return manifest


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.canonical_json().encode("utf-8")).hexdigest()


def versions() -> Dict[str, str]:
    return {
        "hinf_pi": hinf_pi.__version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


def run_experiment(cfg: ExperimentConfig, output_dir: Optional[str] = None, workers: int = 1) -> RunManifest:
    if output_dir is None:
        output_dir = cfg.output_dir or os.path.join(os.environ.get("HINF_OUTPUT_DIR", "runs"), cfg.name)
    return ExperimentPipeline(cfg, output_dir, workers).run()
