import numpy as np
import pytest
from scipy.optimize import brentq

from qlab.mdp import FeatureMap, identity_features, make_random_mdp, random_features
from qlab.oracles import (
    bellman_optimality,
    drift_linear,
    drift_tabular,
    eps_threshold,
    expected_update,
    negdef_bracket,
    negdef_certificate,
    pseudo_contraction_factor,
    solve_q_star,
    state_action_kernel,
    stationary_distribution,
    weighted_bellman,
)
from qlab.oracles.bellman import ValueIterationError, tabular_stationary
from qlab.policies import BehaviorConfig, tabular_eps_softmax
from qlab.verify import stationary_updates

from conftest import one_state_mdp


def naive_bellman(mdp, q):
    out = np.zeros_like(q)
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            total = 0.0
            for s2 in range(mdp.n_states):
                total += mdp.transition[s, a, s2] * (mdp.reward[s, a] + mdp.gamma * max(q[s2]))
            out[s, a] = total
    return out


def test_bellman_one_state():
    mdp = one_state_mdp(1.0, 0.5)
    assert bellman_optimality(mdp, np.zeros((1, 1)))[0, 0] == 1.0


def test_bellman_matches_triple_loop():
    mdp = make_random_mdp(11, 3, 2, 0.8)
    rng = np.random.default_rng(0)
    for _ in range(10):
        q = rng.normal(size=(3, 2))
        assert np.allclose(bellman_optimality(mdp, q), naive_bellman(mdp, q), atol=1e-14)


def test_q_star_closed_forms(baird):
    assert solve_q_star(one_state_mdp(1.0, 0.5)).q[0, 0] == pytest.approx(2.0, abs=1e-10)
    mdp, _ = baird
    assert np.array_equal(solve_q_star(mdp).q, np.zeros((7, 2)))


def test_q_star_residual_and_fixed_point():
    mdp = make_random_mdp(4, 4, 2, 0.9)
    res = solve_q_star(mdp, tol=1e-10)
    assert res.residual <= 1e-10
    assert np.abs(bellman_optimality(mdp, res.q) - res.q).max() <= 1e-10


def test_q_star_errors():
    with pytest.raises(ValueError):
        solve_q_star(one_state_mdp(1.0, 1.0))
    with pytest.raises(ValueIterationError):
        solve_q_star(make_random_mdp(0, 3, 2, 0.99), tol=1e-12, max_iter=5)


def test_weighted_bellman_fixed_point(small_mdp):
    q_star = solve_q_star(small_mdp, 1e-12).q
    for eps in (0.05, 0.5, 1.0):
        assert np.abs(weighted_bellman(small_mdp, q_star, eps) - q_star).max() <= 1e-9
        assert np.abs(drift_tabular(small_mdp, q_star, eps)).max() <= 1e-9


def test_weighted_bellman_scalar_mixing():
    # with a single state and equal q, mu_q is uniform and d = 1/|A| everywhere
    mdp = one_state_mdp(reward=1.0, gamma=0.5, n_actions=4)
    q = np.full((1, 4), 0.7)
    c = 0.25
    expected = c * bellman_optimality(mdp, q) + (1 - c) * q
    assert np.allclose(weighted_bellman(mdp, q, 0.3), expected, atol=1e-14)


def test_weighted_bellman_matches_sub_oracles():
    mdp = make_random_mdp(7, 3, 2, 0.85)
    q = np.random.default_rng(1).normal(size=(3, 2))
    K = state_action_kernel(mdp, tabular_eps_softmax(q, 0.3))
    d = stationary_distribution(K).dist.reshape(3, 2)
    expected = d * (naive_bellman(mdp, q) - q) + q
    assert np.allclose(weighted_bellman(mdp, q, 0.3), expected, atol=1e-12)


def test_drift_tabular_two_paths_and_sign():
    mdp = make_random_mdp(9, 4, 3, 0.9)
    rng = np.random.default_rng(2)
    for _ in range(5):
        q = rng.normal(scale=3.0, size=(4, 3))
        h = drift_tabular(mdp, q, 0.2)
        assert np.allclose(h, weighted_bellman(mdp, q, 0.2) - q, atol=1e-12)
        gap = bellman_optimality(mdp, q) - q
        assert np.all(np.sign(h[gap != 0]) == np.sign(gap[gap != 0]))


def test_pseudo_contraction_factor_plugins():
    assert 1 - (1 - 0.99) * 0.05 == pytest.approx(0.9995, abs=1e-15)
    # a single state with equal q gives d uniform over |A| pairs
    mdp = one_state_mdp(gamma=0.9, n_actions=4)
    assert pseudo_contraction_factor(mdp, np.zeros((1, 4)), 0.5) == pytest.approx(1 - 0.1 / 4, abs=1e-14)


def test_pseudo_contraction_inequality():
    for seed in range(30):
        rng = np.random.default_rng(seed)
        mdp = make_random_mdp(seed, 3, 2, float(rng.uniform(0.5, 0.95)))
        eps = float(rng.uniform(0.01, 1.0))
        q_star = solve_q_star(mdp, 1e-12).q
        q = q_star + rng.normal(scale=5.0, size=q_star.shape)
        factor = pseudo_contraction_factor(mdp, q, eps)
        assert 0 < factor < 1
        lhs = np.abs(weighted_bellman(mdp, q, eps) - q_star).max()
        assert lhs <= factor * np.abs(q - q_star).max() + 1e-9


def test_drift_linear_zero_reward(baird):
    mdp, X = baird
    cfg = BehaviorConfig(0.1, 100.0)
    for w in (np.ones(16), np.arange(16.0) - 3):
        assert np.array_equal(drift_linear(mdp, X, w, cfg).b, np.zeros(16))


def test_drift_linear_identity_features_at_q_star(small_mdp):
    q_star = solve_q_star(small_mdp, 1e-12).q
    drift = drift_linear(small_mdp, identity_features(small_mdp), q_star.ravel(), BehaviorConfig(0.2, 5.0))
    assert np.abs(drift.h).max() <= 1e-9


def test_drift_linear_affine_and_enumeration():
    mdp = make_random_mdp(5, 4, 2, 0.9)
    X = random_features(5, mdp, 3)
    cfg = BehaviorConfig(0.1, 10.0)
    rng = np.random.default_rng(3)
    for _ in range(10):
        w = rng.normal(scale=3.0, size=3)
        drift = drift_linear(mdp, X, w, cfg)
        assert np.allclose(drift.h, drift.A @ w + drift.b, atol=1e-10, rtol=0)
        assert np.allclose(drift.h, expected_update(mdp, X, w, cfg), atol=1e-10, rtol=0)


def test_drift_linear_baird_matches_monte_carlo(baird):
    mdp, X = baird
    cfg = BehaviorConfig(0.1, 100.0)
    w = np.zeros(16)
    w[0] = 1.0
    h = drift_linear(mdp, X, w, cfg).h
    mean, se = stationary_updates(mdp, X, w, cfg, 10**6, seed=0)
    # coordinates with zero variance must agree exactly
    exact = se == 0
    assert np.allclose(mean[exact], h[exact], atol=1e-12)
    assert np.all(np.abs(mean - h)[~exact] <= 3 * se[~exact])


def test_eps_threshold_values():
    assert eps_threshold(0.99) == pytest.approx(1.0202e-4, rel=5e-5)
    assert eps_threshold(0.9) == pytest.approx(0.012195, rel=5e-5)


@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.99])
def test_eps_threshold_is_bracket_root(gamma):
    root = brentq(lambda e: negdef_bracket(gamma, e), 1e-14, 0.5, xtol=1e-15)
    assert root == pytest.approx(eps_threshold(gamma), rel=1e-9)
    thr = eps_threshold(gamma)
    assert negdef_bracket(gamma, 0.5 * thr) > 0 > negdef_bracket(gamma, 2 * thr)


def test_negdef_rank_deficient_is_inconclusive():
    mdp = make_random_mdp(1, 3, 2, 0.9)
    base = np.random.default_rng(0).normal(size=(6, 2))
    X = FeatureMap(np.column_stack([base, base[:, 0] + base[:, 1]]))
    cert = negdef_certificate(mdp, X, np.array([1.0, 2.0, 0.5]), BehaviorConfig(1e-5, 1e4))
    assert cert.beta_formula <= 0
    assert not cert.conclusive and not cert.holds


def test_negdef_holds_in_small_epsilon_regime():
    mdp = make_random_mdp(2, 3, 2, 0.9)
    X = random_features(2, mdp, 4)
    cfg = BehaviorConfig(1e-5, 1e4)
    rng = np.random.default_rng(4)
    for _ in range(20):
        w = rng.normal(size=4)
        w *= rng.uniform(1, 100) / np.linalg.norm(w)
        cert = negdef_certificate(mdp, X, w, cfg)
        if cert.conclusive:
            assert cert.quad <= -cert.beta_formula * cert.norm_sq + 1e-9


def test_tabular_stationary_positive(small_mdp):
    d = tabular_stationary(small_mdp, np.zeros((3, 2)), 0.1)
    assert np.all(d > 0) and d.sum() == pytest.approx(1.0, abs=1e-12)
