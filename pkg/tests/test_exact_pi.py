"""
Model-based policy iteration tests.

 Group 1 - single steps: evaluation, improvement, disturbance update
 Group 2 - full runs on both reference problems
 Group 3 - Loewner monotonicity of the inner and outer sequences
 Group 4 - failure modes: caps and non-stabilizing initial gains
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from hinf_pi.game import CostSpec, SystemModel, gare_residual, is_stabilizer, saddle_gains
from hinf_pi.matops import min_eig
from hinf_pi.solvers.exact_pi import (
    ModelBasedPolicyIteration,
    PiConfig,
    disturbance_update,
    evaluation_residual,
    policy_evaluation,
    policy_improvement,
    run_model_based_pi,
)
from hinf_pi.utils.errors import IterationLimitError, PolicyNotStabilizingError


def scalar_game(gamma=2.0):
    sys = SystemModel([[-1.0]], [[1.0]], [[1.0]], [[0.0]], [[0.0]])
    return sys, CostSpec([[1.0]], [[1.0]], gamma)


def tight(cfg: PiConfig, eps=1e-10) -> PiConfig:
    return cfg.model_copy(update={"eps_inner": eps, "eps_outer": eps})


# ----- Group 1 -----

def test_scalar_evaluation():
    sys, cost = scalar_game()
    P = policy_evaluation(np.zeros((1, 1)), np.zeros((1, 1)), sys, cost)
    assert P[0, 0] == pytest.approx(0.5, rel=1e-12)
    assert evaluation_residual(P, np.zeros((1, 1)), np.zeros((1, 1)), sys, cost) < 1e-12


def test_improvement_and_disturbance_update_match_saddle_gains(ex1, ex1_published):
    sys, cost = ex1
    g = saddle_gains(ex1_published, sys, cost)
    assert_allclose(policy_improvement(ex1_published, sys, cost), g.Lu)
    assert_allclose(disturbance_update(ex1_published, sys, cost), g.Lv)


def test_pi_config_coerces_gains():
    cfg = PiConfig(initial_Lu=[1.0, 2.0])
    assert cfg.initial_Lu.shape == (1, 2)
    assert cfg.initial_Pu is None
    with pytest.raises(ValueError):
        PiConfig(initial_Lu=[[0.0]], eps_inner=0.0)


# ----- Group 2 -----

def test_example_1_reaches_published_value(ex1, ex1_pi, ex1_published):
    trace = run_model_based_pi(*ex1, ex1_pi)
    assert trace.converged
    assert np.max(np.abs(trace.P - ex1_published)) <= 1e-3
    assert trace.records[0].k == 1 and trace.records[0].j == 1
    assert np.isinf(trace.outer[0].step)


def test_example_2_reaches_published_value(ex2, ex2_pi, ex2_published):
    trace = run_model_based_pi(*ex2, ex2_pi)
    assert trace.converged
    assert trace.outer_count <= 15
    assert np.max(np.abs(trace.P - ex2_published)) <= 1e-2


def test_first_inner_limit_is_the_undisturbed_value(ex1, ex1_pi):
    trace = run_model_based_pi(*ex1, tight(ex1_pi))
    P_u1 = trace.outer[0].P
    assert_allclose(P_u1, [[0.1034, 0.0585], [0.0585, 0.1058]], atol=2e-2)
    assert_allclose(trace.outer[0].Lv, disturbance_update(P_u1, *ex1))


def test_tight_run_solves_the_gare(ex1, ex2, ex1_pi, ex2_pi):
    for (sys, cost), cfg in ((ex1, ex1_pi), (ex2, ex2_pi)):
        trace = run_model_based_pi(sys, cost, tight(cfg, 1e-9))
        assert np.linalg.norm(gare_residual(trace.P, sys, cost)) <= 1e-6 * (1 + np.linalg.norm(cost.Q))
        assert_allclose(trace.gains.Lv, saddle_gains(trace.P, sys, cost).Lv, atol=1e-8)
        assert is_stabilizer(trace.gains, sys)


def test_zero_state_weight_gives_zero_value(ex1):
    sys, _ = ex1
    cost = CostSpec(np.zeros((2, 2)), [[0.24]], 0.5)
    trace = run_model_based_pi(sys, cost, PiConfig(initial_Lu=np.zeros((1, 2))))
    assert trace.converged
    assert_allclose(trace.P, 0.0, atol=1e-14)
    assert_allclose(trace.gains.Lu, 0.0, atol=1e-14)


def test_trace_csv_layout(ex1, ex1_pi):
    trace = run_model_based_pi(*ex1, ex1_pi)
    header = trace.csv_header()
    rows = trace.csv_rows()
    assert header[:2] == ["k", "j"] and header[-4:] == ["step", "residual", "abscissa", "condition"]
    assert len(rows) == trace.inner_count
    assert all(len(row) == len(header) for row in rows)
    assert sum(o.inner_iterations for o in trace.outer) == trace.inner_count


# ----- Group 3 -----

def test_inner_sequences_decrease(ex1, ex2, ex1_pi, ex2_pi):
    for problem, cfg in ((ex1, ex1_pi), (ex2, ex2_pi)):
        trace = run_model_based_pi(*problem, tight(cfg))
        for k in range(1, trace.outer_count + 1):
            seq = trace.inner_sequence(k)
            assert len(seq) >= 2
            for before, after in zip(seq, seq[1:]):
                assert min_eig(before - after) >= -1e-8


def test_outer_sequence_increases(ex1, ex2, ex1_pi, ex2_pi):
    for problem, cfg in ((ex1, ex1_pi), (ex2, ex2_pi)):
        trace = run_model_based_pi(*problem, tight(cfg))
        seq = trace.outer_sequence()
        assert len(seq) >= 2
        for before, after in zip(seq, seq[1:]):
            assert min_eig(after - before) >= -1e-8


# ----- Group 4 -----

def test_outer_cap_raises(ex1, ex1_pi):
    with pytest.raises(IterationLimitError):
        run_model_based_pi(*ex1, ex1_pi.model_copy(update={"max_outer": 1}))


def test_inner_cap_raises(ex1, ex1_pi):
    with pytest.raises(IterationLimitError):
        run_model_based_pi(*ex1, ex1_pi.model_copy(update={"max_inner": 1}))


def test_non_stabilizing_initial_gain(ex2):
    sys, cost = ex2
    with pytest.raises(PolicyNotStabilizingError):
        ModelBasedPolicyIteration(sys, cost, PiConfig(initial_Lu=np.zeros((1, 4))))


def test_wrong_gain_shape(ex1):
    sys, cost = ex1
    with pytest.raises(ValueError):
        ModelBasedPolicyIteration(sys, cost, PiConfig(initial_Lu=np.zeros((1, 3))))


def test_violated_initialization_is_only_a_warning(ex1, ex1_pi, caplog):
    sys, cost = ex1
    cfg = ex1_pi.model_copy(update={"initial_Pu": np.zeros((2, 2))})
    with caplog.at_level("WARNING", logger="hinf_pi"):
        ModelBasedPolicyIteration(sys, cost, cfg)
    assert "Initialization inequality" in caplog.text
