import csv
import os
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from hinf_pi.solvers.exact_pi import PiTrace
from hinf_pi.tools.simulate import DataMoments
from hinf_pi.utils.logger import logger
from hinf_pi.utils.messages import LogMessages

Matrix = List[List[float]]


class SeedResult(BaseModel):
    seed: int
    magnitude: Optional[float] = Field(None, description="Disturbance magnitude of a robust run")
    P: Optional[Matrix] = None
    Lu: Optional[Matrix] = None
    Lv: Optional[Matrix] = None
    inner_iterations: int = 0
    outer_iterations: int = 0
    termination: str = "running"
    error_vs_reference: Optional[float] = Field(None, description="Frobenius error against the model-based value")
    error_vs_published: Optional[float] = Field(None, description="Frobenius error against the published value")
    max_condition: Optional[float] = Field(None, description="Largest regression condition number")
    decay_ratio: Optional[float] = Field(None, description="E|X(T)|^2 / |x0|^2 under the final gains")


class EnvelopeEntry(BaseModel):
    magnitude: float
    max_error: Optional[float]
    runs: int
    excluded: int


class RunSummary(BaseModel):
    name: str
    mode: str
    reference_P: Optional[Matrix] = None
    reference_Lu: Optional[Matrix] = None
    reference_Lv: Optional[Matrix] = None
    reference_outer_iterations: Optional[int] = None
    gare_residual: Optional[float] = None
    published_max_deviation: Optional[float] = Field(None, description="Largest elementwise gap to the published value")
    runs: List[SeedResult] = Field(default_factory=list)
    median_error: Optional[float] = None
    envelope: Optional[List[EnvelopeEntry]] = None
    envelope_monotone: Optional[bool] = None
    envelope_vanishing: Optional[bool] = None


class RunManifest(BaseModel):
    config_hash: str = Field(..., description="SHA-256 of the canonical config JSON")
    seeds: List[int]
    mode: str
    versions: Dict[str, str]
    outputs: List[str]
    checks: Dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def as_matrix(M: Optional[np.ndarray]) -> Optional[Matrix]:
    return None if M is None else np.atleast_2d(M).tolist()


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


class ResultWriter:
    """
    Writes the outputs of one run below `output_dir` and remembers their
    relative paths for the manifest. Floats are rendered with repr, so equal
    runs produce equal bytes.
    """

    def __init__(self, output_dir: str):
        if not os.path.isabs(output_dir):
            output_dir = os.path.join(os.getcwd(), output_dir)
        os.makedirs(output_dir, exist_ok=True)
        self.output_dir = output_dir
        self.outputs: List[str] = []

    def _path(self, name: str) -> str:
        path = os.path.join(self.output_dir, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        self.outputs.append(name)
        return path

    def write_csv(self, name: str, header: List[str], rows: List[list]) -> str:
        path = self._path(name)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        logger.info(LogMessages.WRITER_CSV.format(rows=len(rows), path=path))
        return path

    def write_trace(self, name: str, trace: PiTrace, reference: Optional[np.ndarray] = None):
        """Inner-iterate CSV `<name>.csv` and outer-loop CSV `<name>_outer.csv`"""
        self.write_csv(f"{name}.csv", trace.csv_header(), trace.csv_rows())
        width = trace.outer[0].Lv.size if trace.outer else 0
        header = ["k"] + [f"lv_{i}" for i in range(width)] + ["outer_step", "trace_gap"]
        rows = []
        for outer in trace.outer:
            gap = float(np.trace(reference - outer.P)) if reference is not None else float("nan")
            rows.append([outer.k, *outer.Lv.ravel().tolist(), outer.step, gap])
        self.write_csv(f"{name}_outer.csv", header, rows)

    def write_moments(self, name: str, data: DataMoments):
        data.to_csv(self._path(name))
        logger.info(LogMessages.WRITER_FILE.format(path=os.path.join(self.output_dir, name)))

    def write_json(self, name: str, document: BaseModel) -> str:
        path = self._path(name)
        try:
            with open(path, "w", encoding="utf-8") as f:
                f.write(document.model_dump_json(indent=2) + "\n")
        except OSError as e:
            logger.error(f"❌ [ResultWriter] Failed to write {path}: {e}")
            raise
        logger.info(LogMessages.WRITER_FILE.format(path=path))
        return path
