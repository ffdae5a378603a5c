"""Exact Bellman operators, drift terms and the negative-definiteness certificate.

Value tables are ``(n_states, n_actions)`` arrays; flattened vectors follow the
row-major pair order of :mod:`qlab.mdp`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..mdp import FeatureMap, Mdp, check_compatible
from ..policies import BehaviorConfig, greedy_policy, linear_eps_softmax, tabular_eps_softmax
from .markov import state_action_kernel, stationary_distribution


class ValueIterationError(RuntimeError):
    pass


def bellman_optimality(mdp: Mdp, q: np.ndarray) -> np.ndarray:
    """``(Tq)(s,a) = r(s,a) + gamma * sum_s' p(s'|s,a) max_a' q(s',a')``."""
    q = np.asarray(q, dtype=np.float64).reshape(mdp.n_states, mdp.n_actions)
    return mdp.reward + mdp.gamma * (mdp.transition @ q.max(axis=1))


@dataclass(frozen=True)
class QStar:
    q: np.ndarray
    residual: float
    iterations: int


def solve_q_star(mdp: Mdp, tol: float = 1e-10, max_iter: int = 10**6) -> QStar:
    """Value iteration stopped once ``||q - q*||_inf <= tol`` is guaranteed."""
    if not 0.0 <= mdp.gamma < 1.0:
        raise ValueError("value iteration needs gamma < 1")
    threshold = tol * (1.0 - mdp.gamma) / (2.0 * mdp.gamma) if mdp.gamma > 0 else math.inf
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for it in range(1, max_iter + 1):
        nxt = bellman_optimality(mdp, q)
        step = float(np.abs(nxt - q).max())
        q = nxt
        if step <= threshold:
            res = float(np.abs(bellman_optimality(mdp, q) - q).max())
            return QStar(q, res, it)
    raise ValueIterationError(f"value iteration did not reach tol={tol} in {max_iter} iterations")


def tabular_stationary(mdp: Mdp, q: np.ndarray, epsilon: float) -> np.ndarray:
    """``d_{mu_q}`` reshaped to ``(n_states, n_actions)``."""
    mu = tabular_eps_softmax(q, epsilon)
    return stationary_distribution(state_action_kernel(mdp, mu)).dist.reshape(q.shape)


def weighted_bellman(mdp: Mdp, q: np.ndarray, epsilon: float) -> np.ndarray:
    """``T'q = D_{mu_q} (Tq - q) + q``."""
    q = np.asarray(q, dtype=np.float64).reshape(mdp.n_states, mdp.n_actions)
    d = tabular_stationary(mdp, q, epsilon)
    return d * (bellman_optimality(mdp, q) - q) + q


def drift_tabular(mdp: Mdp, q: np.ndarray, epsilon: float) -> np.ndarray:
    """Expected tabular update ``h(q) = D_{mu_q}(Tq - q)``."""
    q = np.asarray(q, dtype=np.float64).reshape(mdp.n_states, mdp.n_actions)
    d = tabular_stationary(mdp, q, epsilon)
    return d * (bellman_optimality(mdp, q) - q)


def pseudo_contraction_factor(mdp: Mdp, q: np.ndarray, epsilon: float) -> float:
    """Per-``q`` factor ``1 - (1 - gamma) * min d_{mu_q}``."""
    q = np.asarray(q, dtype=np.float64).reshape(mdp.n_states, mdp.n_actions)
    d = tabular_stationary(mdp, q, epsilon)
    return 1.0 - (1.0 - mdp.gamma) * float(d.min())


@dataclass(frozen=True)
class DriftLinear:
    A: np.ndarray
    b: np.ndarray
    h: np.ndarray
    d: np.ndarray


def linear_stationary(mdp: Mdp, features: FeatureMap, w: np.ndarray, cfg: BehaviorConfig) -> np.ndarray:
    mu = linear_eps_softmax(w, features, cfg, mdp.n_actions)
    return stationary_distribution(state_action_kernel(mdp, mu)).dist


def drift_linear(mdp: Mdp, features: FeatureMap, w: np.ndarray, cfg: BehaviorConfig) -> DriftLinear:
    """``A(w) = X^T D (gamma P_{pi_w} - I) X``, ``b(w) = X^T D r``, ``h = A w + b``."""
    check_compatible(mdp, features)
    w = np.asarray(w, dtype=np.float64)
    X = features.matrix
    d = linear_stationary(mdp, features, w, cfg)
    pi = greedy_policy((X @ w).reshape(mdp.n_states, mdp.n_actions))
    P_pi = state_action_kernel(mdp, pi)
    XtD = X.T * d
    A = XtD @ (mdp.gamma * P_pi @ X - X)
    b = XtD @ mdp.reward.ravel()
    return DriftLinear(A, b, A @ w + b, d)


def update_table(mdp: Mdp, features: FeatureMap, w: np.ndarray) -> np.ndarray:
    """``H(w, (s, a, s'))`` for every transition, shape ``(nS, nA, nS, dim)``."""
    Xs = features.rows_for(mdp)
    values = Xs @ w
    best_next = values.max(axis=1)
    delta = mdp.reward[:, :, None] + mdp.gamma * best_next[None, None, :] - values[:, :, None]
    return delta[..., None] * Xs[:, :, None, :]


def expected_update(mdp: Mdp, features: FeatureMap, w: np.ndarray, cfg: BehaviorConfig) -> np.ndarray:
    """``E_{y ~ d}[H(w, y)]`` by enumerating all transitions ``(s, a, s')``."""
    d = linear_stationary(mdp, features, w, cfg).reshape(mdp.n_states, mdp.n_actions)
    weights = d[:, :, None] * mdp.transition
    return np.einsum("ijk,ijkl->l", weights, update_table(mdp, features, w))


def eps_threshold(gamma: float) -> float:
    """Largest admissible exploration weight ``(1-g)^2 / ((1-g)^2 + g^2)``."""
    return (1.0 - gamma) ** 2 / ((1.0 - gamma) ** 2 + gamma**2)


def negdef_bracket(gamma: float, epsilon: float) -> float:
    """``(1 - gamma) - eps * gamma * sqrt(1/eps + 1/(1 - eps))``."""
    if epsilon >= 1.0:
        return -math.inf
    return (1.0 - gamma) - epsilon * gamma * math.sqrt(1.0 / epsilon + 1.0 / (1.0 - epsilon))


@dataclass(frozen=True)
class NegdefCertificate:
    quad: float
    beta_formula: float
    norm_sq: float

    @property
    def conclusive(self) -> bool:
        return self.beta_formula > 0

    @property
    def holds(self) -> bool:
        """True when conclusive and ``w^T A w <= -beta ||w||^2``."""
        return self.conclusive and self.quad <= -self.beta_formula * self.norm_sq


def negdef_beta(mdp: Mdp, features: FeatureMap, d: np.ndarray, cfg: BehaviorConfig) -> float:
    X = features.matrix
    eig = np.linalg.eigvalsh((X.T * d) @ X)
    lam_min, lam_max = max(float(eig[0]), 0.0), max(float(eig[-1]), 0.0)
    g, eps = mdp.gamma, cfg.epsilon
    return negdef_bracket(g, eps) * lam_min - g * (1.0 - eps) * math.log(mdp.n_actions) / cfg.kappa0 * math.sqrt(lam_max)


def negdef_certificate(mdp: Mdp, features: FeatureMap, w: np.ndarray, cfg: BehaviorConfig) -> NegdefCertificate:
    w = np.asarray(w, dtype=np.float64)
    drift = drift_linear(mdp, features, w, cfg)
    beta = negdef_beta(mdp, features, drift.d, cfg)
    return NegdefCertificate(float(w @ drift.A @ w), beta, float(w @ w))


def inner_product_constant(mdp: Mdp, features: FeatureMap) -> float:
    """Instance constant ``|S|^2 |A| C_x C_r`` for the drift inner-product bound."""
    return mdp.n_states**2 * mdp.n_actions * features.max_row_norm * mdp.reward_bound
