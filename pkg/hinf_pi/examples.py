"""
The two reference problems: a 2-dimensional system with scalar control and
disturbance, and a stochastic two-mass spring system with uncertain stiffness.
"""
from typing import List

from hinf_pi.config import (
    CostSettings,
    ExperimentConfig,
    SimSettings,
    SystemSettings,
)
from hinf_pi.tools.simulate import ExplorationSpec

EXAMPLE_1_P = [[0.1473, 0.1041], [0.1041, 0.1661]]

EXAMPLE_2_P = [
    [3.4025, -3.1333, -1.4814, -1.4601],
    [-3.1333, 9.9070, 8.3560, 5.5014],
    [-1.4814, 8.3560, 10.0285, 5.1207],
    [-1.4601, 5.5014, 5.1207, 4.5561],
]


def example_1_config() -> ExperimentConfig:
    return ExperimentConfig(
        name="example-1",
        mode="reproduce_example_1",
        system=SystemSettings(
            A=[[-1.2115, 0.7141], [0.8597, -1.0757]],
            B1=[[0.6052], [0.6433]],
            B2=[[0.3281], [0.8746]],
            C=[[0.0743, 0.0545], [0.0935, 0.0397]],
            D=[[0.0774], [0.0118]],
        ),
        cost=CostSettings(Q=[[0.2, 0.0], [0.0, 0.2]], R=[[0.24]], gamma=0.5),
        sim=SimSettings(horizon=2.0, n_intervals=8, substeps=100, n_paths=10000, x0=[2.0, 3.0], closed_loop_horizon=10.0),
        seeds=[0, 1, 2, 3, 4],
        published_P=EXAMPLE_1_P,
        published_tolerance=1e-3,
        model_free_tolerance=0.05,
    )


def example_2_config() -> ExperimentConfig:
    k = 1.25
    return ExperimentConfig(
        name="example-2",
        mode="reproduce_example_2",
        system=SystemSettings(
            A=[[0, 0, 1, 0], [0, 0, 0, 1], [-k, k, 0, 0], [k, -k, 0, 0]],
            B1=[[0], [0], [0], [1]],
            B2=[[0], [0], [1], [0]],
            C=[[0, 0, 0, 0], [0, 0, 0, 0], [-0.25, 0.25, 0, 0], [0.25, -0.25, 0, 0]],
            D=[[0], [0], [0], [0.2]],
        ),
        cost=CostSettings(Q=[[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], R=[[1.0]], gamma=2.0),
        sim=SimSettings(
            horizon=10.0,
            n_intervals=100,
            substeps=100,
            n_paths=10000,
            x0=[1.0, 0.5, -0.5, 1.0],
            # around the 1.58 rad/s spring mode, several tones per channel
            exploration=ExplorationSpec(
                amplitude=0.5,
                frequencies_u=[0.7, 1.6, 3.1],
                frequencies_v=[1.1, 2.3],
                noise_u=0.5,
                noise_v=0.5,
            ),
            closed_loop_horizon=10.0,
        ),
        seeds=[0, 1, 2, 3, 4],
        published_P=EXAMPLE_2_P,
        published_tolerance=1e-2,
        model_free_tolerance=1.0,
    )


_EXAMPLES = {"example-1": example_1_config, "example-2": example_2_config}


def builtin_examples() -> List[ExperimentConfig]:
    return [factory() for factory in _EXAMPLES.values()]


def get_example(name: str) -> ExperimentConfig:
    if name not in _EXAMPLES:
        raise KeyError(f"Unknown example {name!r}, expected one of {sorted(_EXAMPLES)}")
    return _EXAMPLES[name]()

