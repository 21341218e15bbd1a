import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

import numpy as np
import pytest

from hinf_pi.examples import EXAMPLE_1_P, EXAMPLE_2_P, example_1_config, example_2_config
from hinf_pi.game import find_initial_policy
from hinf_pi.solvers.exact_pi import PiConfig


@pytest.fixture(scope="session")
def ex1():
    cfg = example_1_config()
    return cfg.system.build(), cfg.cost.build()


@pytest.fixture(scope="session")
def ex2():
    cfg = example_2_config()
    return cfg.system.build(), cfg.cost.build()


@pytest.fixture(scope="session")
def ex1_initial(ex1):
    return find_initial_policy(*ex1)


@pytest.fixture(scope="session")
def ex2_initial(ex2):
    return find_initial_policy(*ex2)


@pytest.fixture
def ex1_pi(ex1_initial):
    Lu, Pu = ex1_initial
    return PiConfig(initial_Lu=Lu, initial_Pu=Pu)


@pytest.fixture
def ex2_pi(ex2_initial):
    Lu, Pu = ex2_initial
    return PiConfig(initial_Lu=Lu, initial_Pu=Pu)


@pytest.fixture(scope="session")
def ex1_published():
    return np.array(EXAMPLE_1_P)


@pytest.fixture(scope="session")
def ex2_published():
    return np.array(EXAMPLE_2_P)


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)
