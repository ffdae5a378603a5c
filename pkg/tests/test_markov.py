import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlab.mdp import Mdp, make_baird, make_random_mdp
from qlab.oracles import (
    MixingFitError,
    StationaryError,
    mixing_profile,
    state_action_kernel,
    stationary_distribution,
)
from qlab.policies import tabular_eps_softmax, uniform_policy

from conftest import one_state_mdp


def test_kernel_single_state_repeats_policy_row():
    mdp = one_state_mdp(n_actions=3)
    pi = np.array([[0.2, 0.5, 0.3]])
    K = state_action_kernel(mdp, pi)
    assert K.shape == (3, 3)
    assert np.array_equal(K, np.tile(pi, (3, 1)))


def test_kernel_symmetric_chain_is_doubly_stochastic():
    P = np.array([[[0.3, 0.7], [0.7, 0.3]], [[0.7, 0.3], [0.3, 0.7]]])
    mdp = Mdp(P, np.zeros((2, 2)), 0.9, np.full(2, 0.5))
    K = state_action_kernel(mdp, uniform_policy(2, 2))
    assert np.allclose(K.sum(axis=0), 1.0, atol=1e-12)
    assert np.allclose(K.sum(axis=1), 1.0, atol=1e-12)


def test_kernel_matches_brute_force(small_mdp):
    mdp = small_mdp
    pi = tabular_eps_softmax(np.random.default_rng(0).normal(size=(mdp.n_states, mdp.n_actions)), 0.3)
    K = state_action_kernel(mdp, pi)
    nS, nA = mdp.n_states, mdp.n_actions
    for s in range(nS):
        for a in range(nA):
            for s2 in range(nS):
                for a2 in range(nA):
                    assert K[s * nA + a, s2 * nA + a2] == pytest.approx(mdp.transition[s, a, s2] * pi[s2, a2], abs=1e-15)
    assert np.all(K >= 0)
    assert np.allclose(K.sum(axis=1), 1.0, atol=1e-12)


def test_kernel_rejects_shape_mismatch(small_mdp):
    with pytest.raises(ValueError):
        state_action_kernel(small_mdp, uniform_policy(small_mdp.n_states + 1, small_mdp.n_actions))


def test_baird_kernel_columns_only_on_state_six():
    mdp, _ = make_baird()
    K = state_action_kernel(mdp, uniform_policy(7, 2))
    assert np.count_nonzero(K[:, :12]) == 0
    assert np.all(K[:, 12:] == 0.5)


def test_stationary_symmetric():
    res = stationary_distribution(np.array([[0.5, 0.5], [0.5, 0.5]]))
    assert np.allclose(res.dist, [0.5, 0.5], atol=1e-12)
    assert res.residual <= 1e-10


def test_stationary_rejects_identity():
    with pytest.raises(StationaryError):
        stationary_distribution(np.eye(3))


def test_stationary_baird_uniform():
    mdp, _ = make_baird()
    d = stationary_distribution(state_action_kernel(mdp, uniform_policy(7, 2))).dist
    expected = np.zeros(14)
    expected[12:] = 0.5
    assert np.allclose(d, expected, atol=1e-12)
    # brute-force power iteration from the uniform start
    v = np.full(14, 1 / 14)
    K = state_action_kernel(mdp, uniform_policy(7, 2))
    for _ in range(50):
        v = v @ K
    assert np.allclose(v, expected, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5), st.integers(1, 3), st.floats(0.05, 1.0))
def test_stationary_invariants(seed, nS, nA, eps):
    mdp = make_random_mdp(seed, nS, nA, 0.9)
    q = np.random.default_rng(seed).normal(size=(nS, nA))
    K = state_action_kernel(mdp, tabular_eps_softmax(q, eps))
    res = stationary_distribution(K)
    assert abs(res.dist.sum() - 1.0) <= 1e-10
    assert np.all(res.dist >= 0)
    assert res.residual <= 1e-10
    assert np.abs(res.dist @ K - res.dist).sum() <= 1e-10


def test_mixing_rank_one_kernel():
    P = np.tile([0.2, 0.3, 0.5], (3, 1))
    prof = mixing_profile(P, 10)
    assert prof.tv_curve[1] == pytest.approx(0.0, abs=1e-15)
    for alpha in (1e-12, 1e-3, 0.5 * prof.tv_curve[0]):
        assert prof.tau_alpha(alpha) == 1
    assert prof.tau_alpha(prof.tv_curve[0]) == 0


@pytest.mark.parametrize("a, b", [(0.3, 0.4), (0.1, 0.2), (0.6, 0.7), (0.05, 0.05)])
def test_mixing_two_state_rate(a, b):
    P = np.array([[1 - a, a], [b, 1 - b]])
    prof = mixing_profile(P, 400)
    assert prof.tau == pytest.approx(abs(1 - a - b), abs=1e-6)
    assert 0 < prof.tau < 1


def test_mixing_curve_monotone_and_tau_alpha_minimal(small_mdp):
    K = state_action_kernel(small_mdp, uniform_policy(small_mdp.n_states, small_mdp.n_actions))
    prof = mixing_profile(K, 100)
    assert np.all(np.diff(prof.tv_curve) <= 1e-12)
    for alpha in np.logspace(-10, 0, 11):
        n = prof.tau_alpha(alpha)
        assert prof.c0 * prof.tau**n <= alpha
        assert n == 0 or prof.c0 * prof.tau ** (n - 1) > alpha


def test_mixing_baird_collapses_in_one_step():
    mdp, _ = make_baird()
    K = state_action_kernel(mdp, uniform_policy(7, 2))
    prof = mixing_profile(K, 10)
    assert prof.tv_curve[0] > 1.0
    assert np.all(prof.tv_curve[1:] <= 1e-15)
    assert prof.tau_alpha(1e-6) == 1


def test_mixing_flat_curve_fails():
    # periodic two-cycle never approaches its stationary law
    with pytest.raises(MixingFitError):
        mixing_profile(np.array([[0.0, 1.0], [1.0, 0.0]]), 20, d=np.array([0.5, 0.5]))


def test_tau_alpha_rejects_nonpositive():
    prof = mixing_profile(np.array([[0.7, 0.3], [0.4, 0.6]]), 50)
    with pytest.raises(ValueError):
        prof.tau_alpha(0.0)
