"""
Euler-Maruyama simulation of the controlled SDE and Monte Carlo estimation of
the data moments consumed by the model-free solver.

Paths are simulated in fixed-size batches, vectorized over the paths of a
batch. Every path owns a random stream derived from (seed, stream name, path
index), so the result does not depend on the number of workers.
"""
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.linalg as linalg
from pydantic import BaseModel, Field, PositiveFloat

from hinf_pi.game import CostSpec, Gains, SystemModel
from hinf_pi.matops import half_vec, quad_features, svec_size, vec
from hinf_pi.utils.errors import StateBlowUpError
from hinf_pi.utils.logger import logger
from hinf_pi.utils.messages import LogMessages

# Named sub-streams of the root seed
STREAMS = {"collection": 1, "closed_loop": 2, "disturbance": 3}


class ExplorationSpec(BaseModel):
    """
    e_u = a sum_k sin(w_k t) + sqrt(lambda_1 R^-1) xi,  e_v = a sum_k cos(w_k t) + sqrt(lambda_2) gamma^-1 xi

    The sums run over frequencies_u (frequencies_v), or over the single
    frequency when those are unset.
    """
    enabled: bool = Field(True, description="Add exploration signals to the behavior inputs")
    amplitude: float = Field(0.1, ge=0, description="Sinusoid amplitude")
    frequency: float = Field(10.0, gt=0, description="Sinusoid angular frequency")
    noise_u: float = Field(0.05, ge=0, description="lambda_1, Gaussian scale of e_u")
    noise_v: float = Field(0.05, ge=0, description="lambda_2, Gaussian scale of e_v")
    frequency_offset: float = Field(1.0, ge=0, description="Frequency added per extra input component")
    frequencies_u: Optional[List[PositiveFloat]] = Field(None, min_length=1, description="Sinusoid frequencies of e_u")
    frequencies_v: Optional[List[PositiveFloat]] = Field(None, min_length=1, description="Sinusoid frequencies of e_v")


class SimConfig(BaseModel):
    horizon: float = Field(2.0, gt=0, description="Time horizon T")
    n_intervals: int = Field(8, ge=1, description="Number N of sampling intervals")
    substeps: int = Field(100, ge=1, description="Euler-Maruyama substeps G per interval")
    n_paths: int = Field(10000, ge=1, description="Monte Carlo sample paths H")
    x0: List[float] = Field(..., min_length=1, description="Initial state")
    seed: int = Field(0, ge=0, description="Root seed")
    exploration: ExplorationSpec = Field(default_factory=ExplorationSpec)
    batch_size: int = Field(250, ge=1, description="Paths simulated together")
    workers: int = Field(1, ge=1, description="Batch worker threads")
    blow_up: float = Field(1e6, gt=0, description="Admissible state norm during data collection")

    @property
    def n_steps(self) -> int:
        return self.n_intervals * self.substeps

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def batches(self) -> List[range]:
        return [range(s, min(s + self.batch_size, self.n_paths)) for s in range(0, self.n_paths, self.batch_size)]


def regression_unknowns(n: int, m1: int, m2: int) -> int:
    """n(n+1)/2 + m1 n + m2 n + m1(m1+1)/2"""
    return svec_size(n) + m1 * n + m2 * n + svec_size(m1)


@dataclass(frozen=True)
class DataMoments:
    """
    Per-interval path averages, one row per sampling interval:
    delta_xx (xbar increments), delta_uu (int ubar), I_xx (int x(x)x),
    I_xu (int x(x)u), I_xv (int x(x)v). xbar_means keeps the N+1 endpoint
    averages when the moments come from simulation.
    """
    delta_xx: np.ndarray
    delta_uu: np.ndarray
    I_xx: np.ndarray
    I_xu: np.ndarray
    I_xv: np.ndarray
    xbar_means: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("delta_xx", "delta_uu", "I_xx", "I_xu", "I_xv", "xbar_means"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.atleast_2d(np.array(value, dtype=float))
            value.setflags(write=False)
            object.__setattr__(self, name, value)

        rows = {b.shape[0] for b in (self.delta_xx, self.delta_uu, self.I_xx, self.I_xu, self.I_xv)}
        if len(rows) != 1:
            raise ValueError(f"Moment blocks must share the row count, got {sorted(rows)}")
        n = int(round(np.sqrt(self.I_xx.shape[1])))
        if n * n != self.I_xx.shape[1] or self.delta_xx.shape[1] != svec_size(n):
            raise ValueError(f"Inconsistent state dimension: I_xx {self.I_xx.shape}, delta_xx {self.delta_xx.shape}")
        if self.I_xu.shape[1] % n or self.I_xv.shape[1] % n:
            raise ValueError(f"I_xu and I_xv widths must be multiples of n={n}")
        if self.delta_uu.shape[1] != svec_size(self.I_xu.shape[1] // n):
            raise ValueError(f"delta_uu width {self.delta_uu.shape[1]} does not match m1={self.I_xu.shape[1] // n}")
        if self.xbar_means is not None and self.xbar_means.shape != (self.n_rows + 1, svec_size(n)):
            raise ValueError(f"xbar_means must be {(self.n_rows + 1, svec_size(n))}, got {self.xbar_means.shape}")

    @property
    def n(self) -> int:
        return int(round(np.sqrt(self.I_xx.shape[1])))

    @property
    def m1(self) -> int:
        return self.I_xu.shape[1] // self.n

    @property
    def m2(self) -> int:
        return self.I_xv.shape[1] // self.n

    @property
    def n_rows(self) -> int:
        return self.I_xx.shape[0]

    @property
    def unknowns(self) -> int:
        return regression_unknowns(self.n, self.m1, self.m2)

    def duplicated(self) -> "DataMoments":
        """Every row appended twice (least-squares invariance checks)"""
        stack = lambda M: np.vstack([M, M])
        return DataMoments(stack(self.delta_xx), stack(self.delta_uu), stack(self.I_xx), stack(self.I_xu), stack(self.I_xv))

    def save(self, path: str):
        arrays = {name: getattr(self, name) for name in ("delta_xx", "delta_uu", "I_xx", "I_xu", "I_xv")}
        if self.xbar_means is not None:
            arrays["xbar_means"] = self.xbar_means
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str) -> "DataMoments":
        with np.load(path) as data:
            return cls(
                data["delta_xx"], data["delta_uu"], data["I_xx"], data["I_xu"], data["I_xv"],
                data["xbar_means"] if "xbar_means" in data.files else None,
            )

    def to_csv(self, path: str):
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["n", "m1", "m2", "N"])
            writer.writerow([self.n, self.m1, self.m2, self.n_rows])
            for i in range(self.n_rows):
                row = np.concatenate([self.delta_xx[i], self.delta_uu[i], self.I_xx[i], self.I_xu[i], self.I_xv[i]])
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path: str) -> "DataMoments":
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader)
            if header != ["n", "m1", "m2", "N"]:
                raise ValueError(f"Unexpected moments header {header}")
            n, m1, m2, N = (int(x) for x in next(reader))
            body = np.array([[float(x) for x in row] for row in reader if row])
        if body.shape[0] != N:
            raise ValueError(f"Expected {N} moment rows, found {body.shape[0]}")
        widths = [svec_size(n), svec_size(m1), n * n, n * m1, n * m2]
        if body.shape[1] != sum(widths):
            raise ValueError(f"Expected {sum(widths)} columns per row, found {body.shape[1]}")
        blocks = np.split(body, np.cumsum(widths)[:-1], axis=1)
        return cls(*blocks)


def em_step(x, u, v, dt: float, dW, sys: SystemModel) -> np.ndarray:
    """
    x' = x + (Ax + B1u + B2v)dt + (Cx + Du)dW for one state or a batch of
    states (rows), with one scalar Brownian increment per state.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x, u, v = (np.asarray(a, dtype=float) for a in (x, u, v))
    dW = np.asarray(dW, dtype=float)
    drift = x @ sys.A.T + u @ sys.B1.T + v @ sys.B2.T
    diffusion = x @ sys.C.T + u @ sys.D.T
    return x + drift * dt + diffusion * dW.reshape(dW.shape + (1,))


def path_rng(seed: int, stream: str, path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[stream], path)))


def _path_noise(seed: int, stream: str, paths: range, n_steps: int, width: int) -> np.ndarray:
    """Standard normals of shape (paths, steps, width), one generator per path"""
    return np.stack([path_rng(seed, stream, p).standard_normal((n_steps, width)) for p in paths])


class _Exploration:
    """Deterministic sinusoids plus the Gaussian scalings of e_u and e_v"""

    def __init__(self, spec: ExplorationSpec, cost: CostSpec, m1: int, m2: int):
        self.spec = spec
        self.freq_u = self._frequencies(spec.frequencies_u, m1)
        self.freq_v = self._frequencies(spec.frequencies_v, m2)
        self.chol_u = linalg.cholesky(spec.noise_u * linalg.inv(cost.R), lower=True) if spec.noise_u > 0 else np.zeros((m1, m1))
        self.scale_v = np.sqrt(spec.noise_v) / cost.gamma

    def _frequencies(self, base: Optional[List[float]], m: int) -> np.ndarray:
        # one row per sinusoid, one column per input component
        base = np.asarray(base if base else [self.spec.frequency], dtype=float)
        return base[:, None] + self.spec.frequency_offset * np.arange(m)

    def e_u(self, t: float, xi: np.ndarray) -> np.ndarray:
        return self.spec.amplitude * np.sin(self.freq_u * t).sum(axis=0) + xi @ self.chol_u.T

    def e_v(self, t: float, xi: np.ndarray) -> np.ndarray:
        return self.spec.amplitude * np.cos(self.freq_v * t).sum(axis=0) + self.scale_v * xi


def _collect_batch(paths: range, sys: SystemModel, Lu: np.ndarray, sim: SimConfig, exploration: Optional[_Exploration]):
    n, m1, m2 = sys.n, sys.m1, sys.m2
    N, G, dt = sim.n_intervals, sim.substeps, sim.dt
    noise = _path_noise(sim.seed, "collection", paths, sim.n_steps, 1 + m1 + m2)

    x = np.tile(np.asarray(sim.x0, dtype=float), (len(paths), 1))
    xbar = np.zeros((N + 1, svec_size(n)))
    I_xx = np.zeros((N, n * n))
    I_xu = np.zeros((N, n * m1))
    I_xv = np.zeros((N, n * m2))
    delta_uu = np.zeros((N, svec_size(m1)))
    xbar[0] = quad_features(x).sum(axis=0)

    step = 0
    for i in range(N):
        for _ in range(G):
            t = step * dt
            xi = noise[:, step]
            u = x @ Lu.T
            v = np.zeros((len(paths), m2))
            if exploration is not None:
                u = u + exploration.e_u(t, xi[:, 1: 1 + m1])
                v = v + exploration.e_v(t, xi[:, 1 + m1:])

            # left-endpoint sums; row-major flattening of x'u matches x (x) u
            I_xx[i] += (x.T @ x).reshape(-1) * dt
            I_xu[i] += (x.T @ u).reshape(-1) * dt
            I_xv[i] += (x.T @ v).reshape(-1) * dt
            delta_uu[i] += quad_features(u).sum(axis=0) * dt

            x = em_step(x, u, v, dt, xi[:, 0] * np.sqrt(dt), sys)
            step += 1

        peak = np.max(np.linalg.norm(x, axis=1))
        if not np.isfinite(peak) or peak > sim.blow_up:
            raise StateBlowUpError(LogMessages.SIM_BLOW_UP.format(norm=peak, t=step * dt, limit=sim.blow_up))
        xbar[i + 1] = quad_features(x).sum(axis=0)

    return xbar, I_xx, I_xu, I_xv, delta_uu


def collect_behavior_data(sys: SystemModel, behavior_Lu: np.ndarray, sim: SimConfig, cost: CostSpec) -> DataMoments:
    """
    Simulate H paths under (u, v) = (Lu x + e_u, e_v) and average the moment
    blocks over paths.

    Args:
        sys: System matrices.
        behavior_Lu: Control gain of the behavior policy.
        sim: Grid, path count, seed and exploration settings.
        cost: Supplies R and gamma for the noise scalings.

    Returns:
        One row of moments per sampling interval.

    Raises:
        StateBlowUpError: A path left the admissible region.
    """
    behavior_Lu = np.atleast_2d(np.asarray(behavior_Lu, dtype=float))
    Gains(behavior_Lu, np.zeros((sys.m2, sys.n))).check_against(sys)
    if len(sim.x0) != sys.n:
        raise ValueError(f"x0 must have {sys.n} entries, got {len(sim.x0)}")
    p = regression_unknowns(sys.n, sys.m1, sys.m2)
    if sim.n_intervals < p:
        raise ValueError(f"n_intervals={sim.n_intervals} is below the {p} regression unknowns")

    exploration = _Exploration(sim.exploration, cost, sys.m1, sys.m2) if sim.exploration.enabled else None
    batches = sim.batches()
    logger.info(LogMessages.SIM_COLLECT_START.format(
        paths=sim.n_paths, intervals=sim.n_intervals, substeps=sim.substeps, batches=len(batches), workers=sim.workers
    ))

    job = lambda paths: _collect_batch(paths, sys, behavior_Lu, sim, exploration)
    if sim.workers > 1:
        with ThreadPoolExecutor(max_workers=sim.workers) as pool:
            partials = list(pool.map(job, batches))
    else:
        partials = [job(paths) for paths in batches]

    # fixed summation order by batch index
    totals = [np.zeros_like(block) for block in partials[0]]
    for partial in partials:
        for total, block in zip(totals, partial):
            total += block
    xbar, I_xx, I_xu, I_xv, delta_uu = (total / sim.n_paths for total in totals)

    data = DataMoments(np.diff(xbar, axis=0), delta_uu, I_xx, I_xu, I_xv, xbar_means=xbar)
    logger.info(LogMessages.SIM_COLLECT_DONE.format(rows=data.n_rows, unknowns=p))
    return data


@dataclass
class ClosedLoopStats:
    times: np.ndarray
    mean_sq_norm: np.ndarray
    std_error: np.ndarray
    x0_sq_norm: float

    def decay_ratio(self) -> float:
        """E|X(T)|^2 / |x0|^2"""
        return float(self.mean_sq_norm[-1] / self.x0_sq_norm)


def _closed_loop_batch(paths: range, sys: SystemModel, g: Gains, sim: SimConfig):
    noise = _path_noise(sim.seed, "closed_loop", paths, sim.n_steps, 1)
    x = np.tile(np.asarray(sim.x0, dtype=float), (len(paths), 1))
    sums = np.zeros(sim.n_steps + 1)
    squares = np.zeros(sim.n_steps + 1)
    sq = np.sum(x * x, axis=1)
    sums[0], squares[0] = sq.sum(), (sq * sq).sum()
    for step in range(sim.n_steps):
        x = em_step(x, x @ g.Lu.T, x @ g.Lv.T, sim.dt, noise[:, step, 0] * np.sqrt(sim.dt), sys)
        sq = np.sum(x * x, axis=1)
        sums[step + 1], squares[step + 1] = sq.sum(), (sq * sq).sum()
    return sums, squares


def simulate_closed_loop(sys: SystemModel, g: Gains, sim: SimConfig) -> ClosedLoopStats:
    """
    Monte Carlo mean of |X(t)|^2 on the Euler-Maruyama grid under
    (u, v) = (Lu x, Lv x). Divergence is reported through the statistics.
    """
    g.check_against(sys)
    batches = sim.batches()
    with np.errstate(over="ignore", invalid="ignore"):
        if sim.workers > 1:
            with ThreadPoolExecutor(max_workers=sim.workers) as pool:
                partials = list(pool.map(lambda paths: _closed_loop_batch(paths, sys, g, sim), batches))
        else:
            partials = [_closed_loop_batch(paths, sys, g, sim) for paths in batches]

        sums = np.zeros(sim.n_steps + 1)
        squares = np.zeros(sim.n_steps + 1)
        for s, sq in partials:
            sums += s
            squares += sq
        mean = sums / sim.n_paths
        variance = np.maximum(squares / sim.n_paths - mean ** 2, 0.0)
        std_error = np.sqrt(variance / sim.n_paths)

    x0 = np.asarray(sim.x0, dtype=float)
    stats = ClosedLoopStats(np.arange(sim.n_steps + 1) * sim.dt, mean, std_error, float(x0 @ x0))
    logger.info(LogMessages.SIM_CLOSED_LOOP.format(horizon=sim.horizon, ratio=stats.decay_ratio()))
    return stats


def exact_moments(
    sys: SystemModel,
    Sxx: List[np.ndarray],
    Sxu: List[np.ndarray],
    Sxv: List[np.ndarray],
    Suu: List[np.ndarray],
) -> DataMoments:
    """
    Moment rows consistent with the dynamics. Each row takes the integrated
    second moments E int XX', E int XU', E int XV', E int UU' over one interval;
    the xbar increment follows from Ito's formula, so the regression identity
    holds exactly.
    """
    A, B1, B2, C, D = sys.A, sys.B1, sys.B2, sys.C, sys.D
    rows = {"delta_xx": [], "delta_uu": [], "I_xx": [], "I_xu": [], "I_xv": []}
    for xx, xu, xv, uu in zip(Sxx, Sxu, Sxv, Suu):
        G = (
            A @ xx + xx @ A.T + C @ xx @ C.T
            + B1 @ xu.T + xu @ B1.T + C @ xu @ D.T + D @ xu.T @ C.T
            + B2 @ xv.T + xv @ B2.T + D @ uu @ D.T
        )
        rows["delta_xx"].append(half_vec(G))
        rows["delta_uu"].append(half_vec(uu))
        rows["I_xx"].append(vec(xx))
        rows["I_xu"].append(vec(xu.T))
        rows["I_xv"].append(vec(xv.T))
    return DataMoments(**{name: np.array(block) for name, block in rows.items()})


def random_consistent_moments(sys: SystemModel, n_rows: int, rng: np.random.Generator) -> DataMoments:
    """Exact moments from random joint second-moment matrices of (x, u, v)"""
    n, m1, m2 = sys.n, sys.m1, sys.m2
    d = n + m1 + m2
    blocks = {"xx": [], "xu": [], "xv": [], "uu": []}
    for _ in range(n_rows):
        F = rng.standard_normal((d, d + 2))
        S = F @ F.T / d
        blocks["xx"].append(S[:n, :n])
        blocks["xu"].append(S[:n, n: n + m1])
        blocks["xv"].append(S[:n, n + m1:])
        blocks["uu"].append(S[n: n + m1, n: n + m1])
    return exact_moments(sys, blocks["xx"], blocks["xu"], blocks["xv"], blocks["uu"])
