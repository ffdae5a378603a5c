"""Behaviour and target policies as row-stochastic ``(n_states, n_actions)`` arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import FeatureMap


@dataclass(frozen=True)
class BehaviorConfig:
    """Exploration weight ``epsilon`` and base inverse temperature ``kappa0``."""

    epsilon: float = 0.1
    kappa0: float = 100.0

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in (0,1], got {self.epsilon}")
        if not self.kappa0 > 0.0:
            raise ValueError(f"kappa0 must be positive, got {self.kappa0}")


def check_policy(probs: np.ndarray, tol: float = 1e-12) -> None:
    if probs.ndim != 2 or np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1) > tol):
        raise ValueError("policy must be a row-stochastic 2-D array")


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def adaptive_temperature(w: np.ndarray, kappa0: float) -> float:
    """``kappa0 / ||w||_2`` when ``||w||_2 >= 1``, otherwise ``kappa0``."""
    norm = float(np.linalg.norm(w))
    return kappa0 / norm if norm >= 1.0 else kappa0


def eps_softmax(logits: np.ndarray, epsilon: float) -> np.ndarray:
    n_actions = logits.shape[-1]
    return epsilon / n_actions + (1.0 - epsilon) * softmax_rows(logits)


def linear_eps_softmax(w: np.ndarray, features: FeatureMap, cfg: BehaviorConfig, n_actions: int) -> np.ndarray:
    """Linear behaviour policy with temperature adapted to ``||w||_2``."""
    kappa = adaptive_temperature(w, cfg.kappa0)
    values = (features.matrix @ w).reshape(-1, n_actions)
    return eps_softmax(kappa * values, cfg.epsilon)


def tabular_eps_softmax(q: np.ndarray, epsilon: float) -> np.ndarray:
    """Tabular behaviour policy; ``q`` has shape ``(n_states, n_actions)``."""
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must be in (0,1], got {epsilon}")
    return eps_softmax(np.asarray(q, dtype=np.float64), epsilon)


def greedy_policy(values: np.ndarray) -> np.ndarray:
    """Deterministic argmax policy; ties go to the lowest action index."""
    values = np.asarray(values)
    probs = np.zeros(values.shape)
    probs[np.arange(values.shape[0]), np.argmax(values, axis=1)] = 1.0
    return probs


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    if n_states < 1 or n_actions < 1:
        raise ValueError("counts must be positive")
    return np.full((n_states, n_actions), 1.0 / n_actions)
