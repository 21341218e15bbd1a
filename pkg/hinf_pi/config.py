"""
Experiment configuration documents. Matrices are row-major nested lists;
cross-field validation builds the domain objects so that shape and
definiteness errors surface before any computation.
"""
import json
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from hinf_pi.game import CostSpec, SystemModel
from hinf_pi.solvers.exact_pi import PiConfig
from hinf_pi.solvers.robust import DisturbanceMode
from hinf_pi.tools.simulate import ExplorationSpec, SimConfig, regression_unknowns

Matrix = List[List[float]]

ExperimentMode = Literal["exact", "model_free", "robust", "reproduce_example_1", "reproduce_example_2"]


class SystemSettings(BaseModel):
    A: Matrix = Field(..., description="Drift matrix (n x n)")
    B1: Matrix = Field(..., description="Control input matrix (n x m1)")
    B2: Matrix = Field(..., description="Disturbance input matrix (n x m2)")
    C: Matrix = Field(..., description="State diffusion matrix (n x n)")
    D: Matrix = Field(..., description="Control diffusion matrix (n x m1)")

    def build(self) -> SystemModel:
        return SystemModel(*(np.array(getattr(self, name), dtype=float) for name in ("A", "B1", "B2", "C", "D")))


class CostSettings(BaseModel):
    Q: Matrix = Field(..., description="State weight, positive semidefinite")
    R: Matrix = Field(..., description="Control weight, positive definite")
    gamma: float = Field(..., gt=0, description="Attenuation level")

    def build(self) -> CostSpec:
        return CostSpec(np.array(self.Q, dtype=float), np.array(self.R, dtype=float), self.gamma)


class PiSettings(BaseModel):
    eps_inner: float = Field(1e-5, gt=0)
    eps_outer: float = Field(1e-5, gt=0)
    max_inner: int = Field(200, ge=1)
    max_outer: int = Field(100, ge=1)
    initial_lu: Optional[Matrix] = Field(None, description="Initial control gain; searched for when omitted")
    initial_pu: Optional[Matrix] = Field(None, description="Certificate of the initialization inequality")

    def build(self, initial_Lu: np.ndarray, initial_Pu: Optional[np.ndarray] = None) -> PiConfig:
        return PiConfig(
            eps_inner=self.eps_inner,
            eps_outer=self.eps_outer,
            max_inner=self.max_inner,
            max_outer=self.max_outer,
            initial_Lu=initial_Lu,
            initial_Pu=initial_Pu,
        )


class SimSettings(BaseModel):
    horizon: float = Field(2.0, gt=0)
    n_intervals: int = Field(8, ge=1)
    substeps: int = Field(100, ge=1)
    n_paths: int = Field(10000, ge=1)
    x0: List[float] = Field(..., min_length=1)
    exploration: ExplorationSpec = Field(default_factory=ExplorationSpec)
    batch_size: int = Field(250, ge=1)
    closed_loop_horizon: Optional[float] = Field(None, gt=0, description="Horizon of the closed-loop decay check (defaults to horizon)")

    def build(self, seed: int, workers: int = 1) -> SimConfig:
        return SimConfig(
            horizon=self.horizon,
            n_intervals=self.n_intervals,
            substeps=self.substeps,
            n_paths=self.n_paths,
            x0=self.x0,
            seed=seed,
            exploration=self.exploration,
            batch_size=self.batch_size,
            workers=workers,
        )

    def build_closed_loop(self, seed: int, workers: int = 1) -> SimConfig:
        """Same grid density over the closed-loop horizon, no exploration"""
        horizon = self.closed_loop_horizon or self.horizon
        intervals = max(1, int(round(self.n_intervals * horizon / self.horizon)))
        return SimConfig(
            horizon=horizon,
            n_intervals=intervals,
            substeps=self.substeps,
            n_paths=self.n_paths,
            x0=self.x0,
            seed=seed,
            exploration=ExplorationSpec(enabled=False),
            batch_size=self.batch_size,
            workers=workers,
        )


class DisturbanceSettings(BaseModel):
    mode: DisturbanceMode = Field("constant_random")
    magnitudes: List[float] = Field(default_factory=lambda: [1e-4, 1e-3, 1e-2], min_length=1)
    decay_rate: float = Field(0.5, gt=0, lt=1)
    max_inner: int = Field(50, ge=1, description="Inner cap of perturbed runs")
    max_outer: int = Field(30, ge=1, description="Outer cap of perturbed runs")
    stabilizing_below: float = Field(1e-3, ge=0, description="Magnitudes up to this value must keep every run stabilizing")


class ExperimentConfig(BaseModel):
    schema_version: Literal[1] = 1
    name: str = Field("experiment", min_length=1, description="Run name, also the default output subdirectory")
    mode: ExperimentMode = Field(..., description="Which solver family to run")
    system: Optional[SystemSettings] = Field(None, description="Omitted only for model_free runs on a data_file")
    cost: CostSettings
    pi: PiSettings = Field(default_factory=PiSettings)
    sim: Optional[SimSettings] = None
    disturbance: DisturbanceSettings = Field(default_factory=DisturbanceSettings)
    data_file: Optional[str] = Field(None, description="Saved data moments (.npz or .csv) for model_free runs")
    output_dir: Optional[str] = None
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    published_P: Optional[Matrix] = Field(None, description="Published saddle value to compare against")
    published_tolerance: float = Field(1e-3, gt=0, description="Elementwise tolerance of the model-based value")
    model_free_tolerance: float = Field(0.05, gt=0, description="Bound on the median Frobenius error of the model-free value")
    decay_threshold: float = Field(0.05, gt=0, description="Bound on E|X(T)|^2 / |x0|^2 under the learned gains")

    @model_validator(mode="after")
    def _cross_check(self):
        if any(seed < 0 for seed in self.seeds):
            raise ValueError("seeds must be non-negative")
        cost = self.cost.build()
        needs_data = self.mode in ("model_free", "reproduce_example_1", "reproduce_example_2")

        if self.system is None:
            if not (self.mode == "model_free" and self.data_file):
                raise ValueError(f"system is required for mode {self.mode} unless a model_free data_file is given")
            if self.pi.initial_lu is None:
                raise ValueError("pi.initial_lu is required when the system is not given")
            Lu = np.atleast_2d(np.array(self.pi.initial_lu, dtype=float))
            if cost.R.shape[0] != Lu.shape[0] or cost.Q.shape[0] != Lu.shape[1]:
                raise ValueError(f"pi.initial_lu shape {Lu.shape} does not match Q and R")
            return self

        sys = self.system.build()
        cost.check_against(sys)
        if self.pi.initial_lu is not None:
            Lu = np.atleast_2d(np.array(self.pi.initial_lu, dtype=float))
            if Lu.shape != (sys.m1, sys.n):
                raise ValueError(f"pi.initial_lu must be {sys.m1}x{sys.n}, got {Lu.shape}")
        if self.pi.initial_pu is not None and np.array(self.pi.initial_pu).shape != (sys.n, sys.n):
            raise ValueError(f"pi.initial_pu must be {sys.n}x{sys.n}")
        if self.published_P is not None and np.array(self.published_P).shape != (sys.n, sys.n):
            raise ValueError(f"published_P must be {sys.n}x{sys.n}")

        if needs_data and self.data_file is None:
            if self.sim is None:
                raise ValueError(f"sim settings are required for mode {self.mode}")
            if len(self.sim.x0) != sys.n:
                raise ValueError(f"sim.x0 must have {sys.n} entries, got {len(self.sim.x0)}")
            p = regression_unknowns(sys.n, sys.m1, sys.m2)
            if self.sim.n_intervals < p:
                raise ValueError(f"sim.n_intervals={self.sim.n_intervals} is below the {p} regression unknowns")
        return self

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return ExperimentConfig.model_validate_json(f.read())
