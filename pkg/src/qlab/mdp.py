"""Finite MDPs, feature maps and the benchmark instances used throughout.

State-action pairs are flattened row-major: pair ``(s, a)`` lives at index
``s * n_actions + a``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class Mdp:
    """Dense finite MDP ``(S, A, p, r, gamma, p0)``.

    ``transition[s, a, s']`` is ``p(s'|s, a)`` and ``reward[s, a]`` is the
    deterministic reward. Arrays are copied and made read-only on construction.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    initial_dist: np.ndarray

    def __post_init__(self):
        for name in ("transition", "reward", "initial_dist"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))
        nS, nA = self.reward.shape
        if self.transition.shape != (nS, nA, nS):
            raise ValueError(
                f"transition shape {self.transition.shape} does not match reward shape {(nS, nA)}"
            )
        if self.initial_dist.shape != (nS,):
            raise ValueError(f"initial_dist must have shape ({nS},)")

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    @property
    def reward_bound(self) -> float:
        """``C_r = max |r(s, a)|``."""
        return float(np.max(np.abs(self.reward)))

    @cached_property
    def transition_lists(self) -> list[list[list[float]]]:
        """``transition`` as nested Python lists, for per-step sampling loops."""
        return self.transition.tolist()

    def pair_index(self, s: int, a: int) -> int:
        return s * self.n_actions + a

    def pair_of(self, index: int) -> tuple[int, int]:
        return divmod(index, self.n_actions)


@dataclass(frozen=True)
class FeatureMap:
    """Feature matrix ``X`` with one row ``x(s, a)`` per flattened pair."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = np.array(self.matrix, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature matrix has non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def max_row_norm(self) -> float:
        """``C_x = max ||x(s, a)||_2``."""
        return float(np.max(np.linalg.norm(self.matrix, axis=1)))

    def rows_for(self, mdp: Mdp) -> np.ndarray:
        """Features reshaped to ``(n_states, n_actions, dim)``."""
        check_compatible(mdp, self)
        return self.matrix.reshape(mdp.n_states, mdp.n_actions, self.dim)


def check_compatible(mdp: Mdp, features: FeatureMap) -> None:
    if features.n_rows != mdp.n_pairs:
        raise ValueError(
            f"feature map has {features.n_rows} rows, MDP has {mdp.n_pairs} state-action pairs"
        )


@dataclass(frozen=True)
class Violation:
    constraint: str
    location: tuple | None
    magnitude: float


@dataclass(frozen=True)
class MdpValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_mdp(mdp: Mdp) -> MdpValidationReport:
    """Collect every violated MDP invariant; never raises."""
    violations = []
    P = mdp.transition
    for s, a in zip(*np.nonzero(np.any(P < 0, axis=2))):
        violations.append(Violation("nonnegative", (int(s), int(a)), float(-P[s, a].min())))
    row_err = np.abs(P.sum(axis=2) - 1.0)
    for s, a in zip(*np.nonzero(row_err > STOCHASTIC_TOL)):
        violations.append(Violation("row-stochastic", (int(s), int(a)), float(row_err[s, a])))
    p0 = mdp.initial_dist
    if np.any(p0 < 0):
        violations.append(Violation("initial-nonnegative", None, float(-p0.min())))
    p0_err = abs(p0.sum() - 1.0)
    if p0_err > STOCHASTIC_TOL:
        violations.append(Violation("initial-stochastic", None, float(p0_err)))
    if not 0.0 <= mdp.gamma < 1.0:
        # magnitude is the distance past the admissible interval [0, 1)
        violations.append(Violation("gamma<1", None, float(max(mdp.gamma - 1.0, -mdp.gamma, 0.0))))
    if not np.all(np.isfinite(mdp.reward)):
        violations.append(Violation("finite-reward", None, float("inf")))
    return MdpValidationReport(violations)


BAIRD_GAMMA = 0.99


def baird_state_features() -> np.ndarray:
    """Classic 7x8 state features: ``2 e_i + e_8`` for i < 7, ``e_7 + 2 e_8``."""
    phi = np.zeros((7, 8))
    for i in range(6):
        phi[i, i] = 2.0
        phi[i, 7] = 1.0
    phi[6, 6] = 1.0
    phi[6, 7] = 2.0
    return phi


def make_baird() -> tuple[Mdp, FeatureMap]:
    """Two-action Baird counterexample with state-action features in R^16.

    Every action from every state moves to state index 6 and all rewards are
    zero. Features are action-block lifts ``x(s, a) = e_a (x) phi(s)``.
    """
    nS, nA = 7, 2
    P = np.zeros((nS, nA, nS))
    P[:, :, 6] = 1.0
    mdp = Mdp(P, np.zeros((nS, nA)), BAIRD_GAMMA, np.full(nS, 1.0 / nS))
    phi = baird_state_features()
    X = np.zeros((nS * nA, nA * phi.shape[1]))
    for s in range(nS):
        for a in range(nA):
            X[s * nA + a] = np.kron(np.eye(nA)[a], phi[s])
    return mdp, FeatureMap(X)


def make_random_mdp(seed: int, n_states: int, n_actions: int, gamma: float) -> Mdp:
    """Random MDP with strictly positive transition rows.

    Rows are Dirichlet(1) draws floored at 1e-3 and renormalised; rewards are
    uniform on [-1, 1]; the initial distribution is uniform.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be positive")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P = np.maximum(P, 1e-3)
    P /= P.sum(axis=2, keepdims=True)
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return Mdp(P, r, gamma, np.full(n_states, 1.0 / n_states))


def identity_features(mdp: Mdp) -> FeatureMap:
    return FeatureMap(np.eye(mdp.n_pairs))


def random_features(seed: int, mdp: Mdp, dim: int) -> FeatureMap:
    """Gaussian features, redrawn until the matrix has full column rank."""
    rng = np.random.default_rng(seed)
    while True:
        X = rng.normal(size=(mdp.n_pairs, dim))
        if np.linalg.matrix_rank(X) == min(X.shape):
            return FeatureMap(X)


def mdp_to_json(mdp: Mdp, features: FeatureMap | None = None) -> dict:
    doc = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "transition": mdp.transition.tolist(),
        "reward": mdp.reward.tolist(),
        "gamma": mdp.gamma,
        "initial_dist": mdp.initial_dist.tolist(),
    }
    if features is not None:
        doc["features"] = features.matrix.tolist()
    return doc


def mdp_from_json(doc: dict) -> tuple[Mdp, FeatureMap | None]:
    mdp = Mdp(
        np.asarray(doc["transition"], dtype=np.float64),
        np.asarray(doc["reward"], dtype=np.float64),
        doc["gamma"],
        np.asarray(doc["initial_dist"], dtype=np.float64),
    )
    if mdp.n_states != doc["n_states"] or mdp.n_actions != doc["n_actions"]:
        raise ValueError("n_states/n_actions disagree with array shapes")
    features = None
    if doc.get("features") is not None:
        features = FeatureMap(np.asarray(doc["features"], dtype=np.float64))
        check_compatible(mdp, features)
    return mdp, features


def save_mdp(path: str | Path, mdp: Mdp, features: FeatureMap | None = None) -> None:
    Path(path).write_text(json.dumps(mdp_to_json(mdp, features), indent=1))


def load_mdp(path: str | Path) -> tuple[Mdp, FeatureMap | None]:
    return mdp_from_json(json.loads(Path(path).read_text()))
