"""
Game model tests.

 Group 1 - SystemModel / CostSpec / Gains validation
 Group 2 - block matrix M(P), Hamiltonian and GARE residual
 Group 3 - saddle gains
 Group 4 - mean-square stabilizer test and initial policy search
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from hinf_pi.game import (
    CostSpec,
    Gains,
    SystemModel,
    assemble_M,
    checked_solve,
    find_initial_policy,
    gare_residual,
    initialization_certificate,
    initialization_gap,
    is_stabilizer,
    saddle_gains,
)
from hinf_pi.matops import min_eig
from hinf_pi.utils.errors import SingularBlockError


# ----- Group 1 -----

def test_system_dimensions(ex1, ex2):
    sys1, _ = ex1
    sys2, _ = ex2
    assert (sys1.n, sys1.m1, sys1.m2) == (2, 1, 1)
    assert (sys2.n, sys2.m1, sys2.m2) == (4, 1, 1)


def test_system_rejects_bad_shapes():
    with pytest.raises(ValueError):
        SystemModel(np.eye(2), np.ones((2, 1)), np.ones((2, 1)), np.eye(2), np.ones((2, 2)))
    with pytest.raises(ValueError):
        SystemModel(np.ones((2, 3)), np.ones((2, 1)), np.ones((2, 1)), np.eye(2), np.ones((2, 1)))


def test_system_matrices_are_read_only(ex1):
    sys, _ = ex1
    with pytest.raises(ValueError):
        sys.A[0, 0] = 1.0


def test_cost_validation():
    with pytest.raises(ValueError):
        CostSpec(np.eye(2), np.array([[0.0]]), 1.0)
    with pytest.raises(ValueError):
        CostSpec(np.eye(2), np.array([[-1.0]]), 1.0)
    with pytest.raises(ValueError):
        CostSpec(np.eye(2), np.eye(1), 0.0)
    with pytest.raises(ValueError):
        CostSpec(np.diag([1.0, -1.0]), np.eye(1), 1.0)


def test_cost_check_against(ex1):
    sys, _ = ex1
    with pytest.raises(ValueError):
        CostSpec(np.eye(3), np.eye(1), 1.0).check_against(sys)


def test_gains_check_against(ex1):
    sys, _ = ex1
    Gains.zeros(sys).check_against(sys)
    with pytest.raises(ValueError):
        Gains(np.zeros((1, 3)), np.zeros((1, 2))).check_against(sys)


def test_stage_weight(ex1):
    _, cost = ex1
    Lu = np.array([[1.0, 2.0]])
    Lv = np.array([[0.5, 0.0]])
    expected = 0.24 * Lu.T @ Lu + cost.Q - 0.25 * Lv.T @ Lv
    assert_allclose(cost.stage_weight(Lu, Lv), expected)


# ----- Group 2 -----

def test_M_at_zero(ex1):
    sys, cost = ex1
    M = assemble_M(np.zeros((2, 2)), sys, cost)
    assert M.M.shape == (4, 4)
    assert_allclose(M.xx, cost.Q)
    assert_allclose(M.uu, cost.R)
    assert_allclose(M.ux, 0.0)
    assert_allclose(M.vx, 0.0)
    assert_allclose(M.uv, 0.0)
    assert M.vv[0, 0] == pytest.approx(-0.25)


def test_M_is_affine_in_P(ex2, rng):
    sys, cost = ex2
    G1, G2 = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    P1, P2 = G1 + G1.T, G2 + G2.T
    M0 = assemble_M(np.zeros((4, 4)), sys, cost).M
    M1 = assemble_M(P1, sys, cost).M
    M2 = assemble_M(P2, sys, cost).M
    M12 = assemble_M(P1 + P2, sys, cost).M
    assert_allclose(M12 - M0, (M1 - M0) + (M2 - M0), atol=1e-12)
    assert np.array_equal(M12, M12.T)


def test_block_shift(ex1):
    sys, cost = ex1
    M = assemble_M(np.eye(2), sys, cost)
    dM = np.zeros((4, 4))
    dM[0, 0] = 1e-3
    shifted = M + dM
    assert shifted.xx[0, 0] == pytest.approx(M.xx[0, 0] + 1e-3)
    assert_allclose(shifted.uu, M.uu)


def test_published_values_nearly_solve_the_gare(ex1, ex2, ex1_published, ex2_published):
    assert np.linalg.norm(gare_residual(ex1_published, *ex1)) <= 5e-3
    assert np.linalg.norm(gare_residual(ex2_published, *ex2)) <= 5e-2


def test_hamiltonian_at_saddle_gains_is_gare_residual(ex1, ex2, ex1_published, ex2_published):
    for (sys, cost), P in ((ex1, ex1_published), (ex2, ex2_published)):
        g = saddle_gains(P, sys, cost)
        H = assemble_M(P, sys, cost).hamiltonian(g.Lu, g.Lv)
        assert_allclose(H, gare_residual(P, sys, cost), atol=1e-10)


def test_checked_solve_rejects_singular():
    with pytest.raises(SingularBlockError):
        checked_solve(np.zeros((2, 2)), np.ones((2, 1)), "block")
    assert_allclose(checked_solve(2 * np.eye(2), np.ones((2, 1)), "block"), 0.5)


# ----- Group 3 -----

def test_saddle_gains_example_1(ex1, ex1_published):
    g = saddle_gains(ex1_published, *ex1)
    assert g.Lu.shape == (1, 2) and g.Lv.shape == (1, 2)
    assert_allclose(g.Lu, [[-0.6553, -0.7090]], atol=5e-3)
    assert_allclose(g.Lv, [[0.5575, 0.7177]], atol=5e-3)


def test_saddle_disturbance_gain_formula(ex2, ex2_published):
    sys, cost = ex2
    g = saddle_gains(ex2_published, sys, cost)
    assert_allclose(g.Lv, sys.B2.T @ ex2_published / 4.0, atol=1e-12)


# ----- Group 4 -----

def test_zero_gains_stabilize_example_1_only(ex1, ex2):
    sys1, _ = ex1
    sys2, _ = ex2
    check1 = is_stabilizer(Gains.zeros(sys1), sys1)
    assert check1 and check1.abscissa < -0.5
    assert not is_stabilizer(Gains.zeros(sys2), sys2)


def test_saddle_gains_stabilize(ex1, ex1_published):
    sys, cost = ex1
    assert is_stabilizer(saddle_gains(ex1_published, sys, cost), sys)


def test_certificate_needs_a_stabilizer(ex2):
    sys, cost = ex2
    assert initialization_certificate(np.zeros((1, 4)), sys, cost) is None


def test_initial_policy_search(ex1, ex2):
    for sys, cost in (ex1, ex2):
        Lu, Pu = find_initial_policy(sys, cost)
        assert Lu.shape == (sys.m1, sys.n)
        assert is_stabilizer(Gains(Lu, np.zeros((sys.m2, sys.n))), sys)
        assert min_eig(Pu) >= -1e-10
        assert initialization_gap(Lu, Pu, sys, cost) <= 1e-8


def test_saddle_gain_of_example_2_is_certified(ex2, ex2_published):
    sys, cost = ex2
    Lu = saddle_gains(ex2_published, sys, cost).Lu
    Pu = initialization_certificate(Lu, sys, cost)
    assert Pu is not None
    assert initialization_gap(Lu, Pu, sys, cost) <= 1e-8


def test_single_lqr_candidate_is_lowered_to_the_target_level(ex2):
    sys, cost = ex2
    Lu, Pu = find_initial_policy(sys, cost, shifts=(0.0,))
    assert is_stabilizer(Gains(Lu, np.zeros((sys.m2, sys.n))), sys)
    assert initialization_gap(Lu, Pu, sys, cost) <= 1e-8
    assert_allclose(Pu, initialization_certificate(Lu, sys, cost), atol=1e-8)


def test_initialization_gap_detects_violation(ex1, ex1_initial):
    sys, cost = ex1
    Lu, _ = ex1_initial
    # P = 0 leaves Q + Lu'R Lu, which is positive definite here
    assert initialization_gap(Lu, np.zeros((2, 2)), sys, cost) >= 0.2 - 1e-12
