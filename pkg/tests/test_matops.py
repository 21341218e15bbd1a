"""
Matrix kernel tests.

 Group 1 - half-vectorization: svec/smat values and inverses, quadratic features
 Group 2 - Kronecker maps: duplication matrix, gain quadratic map
 Group 3 - stochastic Lyapunov operator and solver
 Group 4 - mean-square spectral abscissa
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from hinf_pi.matops import (
    LyapunovOperands,
    duplication_matrix,
    gain_quadratic_map,
    half_vec,
    lyapunov_apply,
    mat,
    min_eig,
    ms_spectral_abscissa,
    quad_features,
    smat,
    solve_stochastic_lyapunov,
    stochastic_operator,
    svec,
    svec_dim,
    vec,
)
from hinf_pi.utils.errors import PolicyNotStabilizingError


def random_symmetric(rng, n):
    G = rng.standard_normal((n, n))
    return 0.5 * (G + G.T)


def random_stable_pair(rng, n):
    X = 0.5 * rng.standard_normal((n, n)) / np.sqrt(n) - 3.0 * np.eye(n)
    Z = 0.3 * rng.standard_normal((n, n)) / np.sqrt(n)
    return X, Z


# ----- Group 1 -----

def test_vec_stacks_columns():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert_allclose(vec(M), [1.0, 3.0, 2.0, 4.0])
    assert_allclose(mat(vec(M), (2, 2)), M)


def test_svec_values():
    assert_allclose(svec(np.array([[1.0, 2.0], [2.0, 3.0]])), [1.0, 4.0, 3.0])
    assert_allclose(svec(np.eye(2)), [1.0, 0.0, 1.0])
    assert_allclose(svec(np.array([[0.1473, 0.1041], [0.1041, 0.1661]])), [0.1473, 0.2082, 0.1661])


def test_svec_ordering_3x3():
    P = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    assert_allclose(svec(P), [1.0, 4.0, 6.0, 4.0, 10.0, 6.0])


def test_svec_rejects_non_square():
    with pytest.raises(ValueError):
        svec(np.ones((2, 3)))


def test_smat_inverts_svec(rng):
    assert_allclose(smat([1.0, 4.0, 3.0], 2), [[1.0, 2.0], [2.0, 3.0]])
    assert_allclose(smat([1.0, 0.0, 1.0], 2), np.eye(2))
    P = random_symmetric(rng, 4)
    assert np.array_equal(smat(svec(P), 4), P)


def test_smat_rejects_length_mismatch():
    with pytest.raises(ValueError):
        smat([1.0, 2.0], 2)


def test_svec_dim():
    assert svec_dim(10) == 4
    with pytest.raises(ValueError):
        svec_dim(7)


def test_quad_features_give_quadratic_form(rng):
    for n in (1, 2, 4):
        P = random_symmetric(rng, n)
        X = rng.standard_normal((5, n))
        expected = np.einsum("hi,ij,hj->h", X, P, X)
        assert_allclose(quad_features(X) @ svec(P), expected, atol=1e-12)


def test_half_vec_gives_trace_product(rng):
    P = random_symmetric(rng, 3)
    S = random_symmetric(rng, 3)
    assert half_vec(S) @ svec(P) == pytest.approx(np.trace(P @ S), abs=1e-12)


def test_asymmetric_input_is_symmetrized_with_warning(caplog):
    P = np.array([[1.0, 2.0], [2.1, 3.0]])
    with caplog.at_level("WARNING", logger="hinf_pi"):
        v = svec(P)
    assert_allclose(v, [1.0, 4.1, 3.0])
    assert "not symmetric" in caplog.text


# ----- Group 2 -----

def test_duplication_matrix(rng):
    for n in (1, 2, 3, 5):
        P = random_symmetric(rng, n)
        assert_allclose(duplication_matrix(n) @ svec(P), vec(P), atol=1e-14)


def test_gain_quadratic_map_small_cases(rng):
    assert_allclose(gain_quadratic_map(np.array([[1.0, 0.0]])), [[1.0, 0.0, 0.0]])
    assert_allclose(gain_quadratic_map(np.eye(2)), duplication_matrix(2))
    assert gain_quadratic_map(rng.standard_normal((3, 2))).shape == (9, 3)


def test_gain_quadratic_map_matches_kronecker(rng):
    for _ in range(500):
        m, n = rng.integers(1, 4, size=2)
        L = rng.standard_normal((m, n))
        P = random_symmetric(rng, n)
        assert_allclose(gain_quadratic_map(L) @ svec(P), np.kron(L, L) @ vec(P), atol=1e-12)
        assert_allclose(gain_quadratic_map(L) @ svec(P), vec(L @ P @ L.T), atol=1e-12)


# ----- Group 3 -----

def test_operator_matches_direct_application(rng):
    X, Z = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    Y = random_symmetric(rng, 3)
    assert_allclose(stochastic_operator(X, Z) @ vec(Y), vec(lyapunov_apply(X, Z, Y)), atol=1e-12)


def test_scalar_lyapunov():
    Y = solve_stochastic_lyapunov(LyapunovOperands([[-2.0]], [[0.5]], [[1.0]]))
    assert Y[0, 0] == pytest.approx(1 / 3.75, rel=1e-12)


def test_deterministic_lyapunov():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    Y = solve_stochastic_lyapunov(LyapunovOperands(-np.eye(2), np.zeros((2, 2)), Q))
    assert_allclose(Y, Q / 2, atol=1e-12)


def test_random_instances_against_dense_solve(rng):
    for trial in range(100):
        n = 1 + trial % 5
        X, Z = random_stable_pair(rng, n)
        assert ms_spectral_abscissa(X, Z) < 0
        W = random_symmetric(rng, n)
        Y = solve_stochastic_lyapunov(LyapunovOperands(X, Z, W))

        residual = np.linalg.norm(lyapunov_apply(X, Z, Y) + W)
        assert residual <= 1e-9 * (1 + np.linalg.norm(W))
        assert np.array_equal(Y, Y.T)
        dense = mat(np.linalg.solve(stochastic_operator(X, Z), -vec(W)), (n, n))
        assert_allclose(Y, dense, atol=1e-10 * (1 + np.linalg.norm(dense)))


def test_operands_validate_shapes():
    with pytest.raises(ValueError):
        LyapunovOperands(np.eye(2), np.eye(3), np.eye(2))


def test_singular_operator_is_reported():
    # X = 0, Z = 0: the operator vanishes
    with pytest.raises(PolicyNotStabilizingError):
        solve_stochastic_lyapunov(LyapunovOperands(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2)))


# ----- Group 4 -----

def test_abscissa_values():
    assert ms_spectral_abscissa(-np.eye(2), np.zeros((2, 2))) == pytest.approx(-2.0)
    assert ms_spectral_abscissa(np.zeros((2, 2)), np.eye(2)) == pytest.approx(1.0)


def test_abscissa_without_diffusion_is_twice_drift_abscissa(rng):
    for _ in range(20):
        X = rng.standard_normal((3, 3))
        expected = 2 * np.max(np.linalg.eigvals(X).real)
        assert ms_spectral_abscissa(X, np.zeros((3, 3))) == pytest.approx(expected, abs=1e-10)


def test_min_eig():
    assert min_eig(np.diag([3.0, -1.0, 2.0])) == pytest.approx(-1.0)
