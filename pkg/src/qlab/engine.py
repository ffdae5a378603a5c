"""Single-timescale stochastic approximation ``w <- w + alpha_t H(w, Y)``.

The noise ``Y_t = (S_t, A_t, S_{t+1})`` is a Markov chain whose kernel depends
on the current iterate through the behaviour policy. Tabular and linear
Q-learning, plus the target-network, projection and ridge variants of the
linear learner, are provided as step functions over :class:`SaState`.

Randomness: run ``i`` of an ensemble with base seed ``b`` draws from a Philox
stream keyed by ``SeedSequence(b + i)``. Every step consumes exactly two
uniforms (action, then successor state), sampled by inverse CDF over
ascending indices, so trajectories are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .mdp import FeatureMap, Mdp, check_compatible
from .policies import BehaviorConfig

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class LearningRateSchedule:
    mode: Literal["polynomial", "constant"] = "constant"
    alpha: float = 0.1
    t0: float = 1.0
    eps_alpha: float = 1.0

    def __post_init__(self):
        if self.mode not in ("polynomial", "constant"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.mode == "polynomial":
            if not self.t0 > 0:
                raise ValueError("t0 must be positive")
            # 0.5 itself is admitted so the boundary schedule can be evaluated
            if not 0.5 <= self.eps_alpha <= 1.0:
                raise ValueError("eps_alpha must be in [0.5, 1]")

    def __call__(self, t: int) -> float:
        if self.mode == "constant":
            return self.alpha
        return self.alpha / (t + self.t0) ** self.eps_alpha


def lr_at(schedule: LearningRateSchedule, t: int) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return schedule(t)


@dataclass(frozen=True)
class Variant:
    kind: Literal["none", "target_network", "projection", "ridge"] = "none"
    sync_period: int = 10
    radius: float = 10.0
    eta: float = 0.01

    def __post_init__(self):
        if self.kind not in ("none", "target_network", "projection", "ridge"):
            raise ValueError(f"unknown variant {self.kind!r}")
        if self.sync_period < 1:
            raise ValueError("sync_period must be >= 1")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def label(self) -> str:
        return {
            "none": "none",
            "target_network": f"target_network({self.sync_period})",
            "projection": f"projection({self.radius:g})",
            "ridge": f"ridge({self.eta:g})",
        }[self.kind]


@dataclass(frozen=True)
class LearnerSpec:
    kind: Literal["tabular", "linear"] = "linear"
    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)
    variant: Variant = field(default_factory=Variant)

    def __post_init__(self):
        if self.kind not in ("tabular", "linear"):
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.kind == "tabular" and self.variant.kind != "none":
            raise ValueError("variants apply to the linear learner only")


class UniformStream:
    """Buffered uniform draws from a Philox generator; chunking does not change the sequence."""

    def __init__(self, seed: int, block: int = 4096):
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        self._block = block
        self._buf: list[float] = []
        self._pos = 0
        self.consumed = 0

    def next(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._gen.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        self.consumed += 1
        return u


def categorical(probs, u: float) -> int:
    """Inverse-CDF draw over ascending indices."""
    c = 0.0
    last = len(probs) - 1
    for i, p in enumerate(probs):
        c += p
        if u < c:
            return i
    # u landed in the rounding gap above the cumulative sum
    return last


@dataclass(frozen=True)
class Transition:
    s: int
    a: int
    r: float
    s_next: int


def sample_transition(mdp: Mdp, policy: np.ndarray, s: int, rng: UniformStream) -> Transition:
    a = categorical(policy[s], rng.next())
    s_next = categorical(mdp.transition[s, a], rng.next())
    return Transition(s, a, float(mdp.reward[s, a]), s_next)


@dataclass
class SaState:
    t: int
    w: np.ndarray
    env_state: int
    rng: UniformStream
    target_w: np.ndarray | None = None
    diverged_at: int | None = None
    last: Transition | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


def initial_state(mdp: Mdp, spec: LearnerSpec, w0: np.ndarray, seed: int) -> SaState:
    """Draw ``S_0 ~ p_0`` from the run's stream and set up the iterate."""
    rng = UniformStream(seed)
    s0 = categorical(mdp.initial_dist, rng.next())
    w = np.array(w0, dtype=np.float64)
    if spec.kind == "tabular":
        w = w.reshape(mdp.n_states, mdp.n_actions)
    target = w.copy() if spec.variant.kind == "target_network" else None
    return SaState(0, w, s0, rng, target)


def eps_softmax_row(logits: list[float], epsilon: float) -> list[float]:
    """Single-state epsilon-softmax with max-logit shift, in plain floats."""
    top = max(logits)
    e = [math.exp(v - top) for v in logits]
    total = sum(e)
    n = len(e)
    return [epsilon / n + (1.0 - epsilon) * v / total for v in e]


def _finite(w: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(w))) and float(np.abs(w).max(initial=0.0)) <= DIVERGENCE_LIMIT


def linear_q_step(
    state: SaState, mdp: Mdp, features: FeatureMap, spec: LearnerSpec, schedule: LearningRateSchedule
) -> SaState:
    """One linear Q-learning step from ``state``; returns the successor state."""
    if spec.kind != "linear":
        raise ValueError("linear_q_step needs a linear learner")
    Xs = features.rows_for(mdp)
    w = state.w
    s = state.env_state
    cfg = spec.behavior
    norm = math.sqrt(float(w @ w))
    kappa = cfg.kappa0 / norm if norm >= 1.0 else cfg.kappa0
    probs = eps_softmax_row((kappa * (Xs[s] @ w)).tolist(), cfg.epsilon)
    a = categorical(probs, state.rng.next())
    s_next = categorical(mdp.transition_lists[s][a], state.rng.next())

    variant = spec.variant
    boot = state.target_w if variant.kind == "target_network" else w
    x = Xs[s, a]
    delta = mdp.reward[s, a] + mdp.gamma * float((Xs[s_next] @ boot).max()) - float(x @ w)
    alpha = schedule(state.t)
    w_new = w + (alpha * delta) * x
    if variant.kind == "ridge":
        w_new = w_new - (alpha * variant.eta * 2.0) * w
    elif variant.kind == "projection":
        n_new = math.sqrt(float(w_new @ w_new))
        if n_new > variant.radius:
            w_new = w_new * (variant.radius / n_new)

    t = state.t + 1
    target = state.target_w
    if variant.kind == "target_network" and t % variant.sync_period == 0:
        target = w_new.copy()
    last = Transition(s, a, float(mdp.reward[s, a]), s_next)
    return SaState(t, w_new, s_next, state.rng, target, None if _finite(w_new) else t, last)


def tabular_q_step(state: SaState, mdp: Mdp, spec: LearnerSpec, schedule: LearningRateSchedule) -> SaState:
    """One asynchronous tabular Q-learning step; only ``q[S_t, A_t]`` changes."""
    if spec.kind != "tabular":
        raise ValueError("tabular_q_step needs a tabular learner")
    q = state.w
    s = state.env_state
    probs = eps_softmax_row(q[s].tolist(), spec.behavior.epsilon)
    a = categorical(probs, state.rng.next())
    s_next = categorical(mdp.transition_lists[s][a], state.rng.next())
    r = float(mdp.reward[s, a])
    old = float(q[s, a])
    delta = r + mdp.gamma * max(q[s_next].tolist()) - old
    new = old + schedule(state.t) * delta
    q_new = q.copy()
    q_new[s, a] = new
    t = state.t + 1
    ok = math.isfinite(new) and abs(new) <= DIVERGENCE_LIMIT
    return SaState(t, q_new, s_next, state.rng, None, None if ok else t, Transition(s, a, r, s_next))


def update_growth_constant(mdp: Mdp, features: FeatureMap) -> float:
    """``C`` with ``||H(w, y)||_2 <= C (||w||_2 + 1)`` for every transition ``y``."""
    cx = features.max_row_norm
    return cx * max(mdp.reward_bound, (1.0 + mdp.gamma) * cx)


class BoundednessViolation(AssertionError):
    pass


METRICS = ("w_norm_sq", "q_error_inf_sq")


@dataclass
class Trajectory:
    """Per-step metric values ``series[t]`` for ``t = 0 .. len(series) - 1``."""

    series: np.ndarray
    diverged_at: int | None
    final_w: np.ndarray


def run_trajectory(
    mdp: Mdp,
    features: FeatureMap | None,
    spec: LearnerSpec,
    schedule: LearningRateSchedule,
    horizon: int,
    seed: int,
    w0: np.ndarray,
    metric: str = "w_norm_sq",
    q_star: np.ndarray | None = None,
    check_bounds: bool = True,
) -> Trajectory:
    """Run one seeded trajectory and record ``metric`` at every step.

    ``q_error_inf_sq`` needs ``q_star``. A diverged run stops at the step where
    the sentinel fired and its series ends just before it. For tabular runs
    with ``alpha_t <= 1`` the bound ``||q_t||_inf <= max(||q_0||_inf,
    C_r / (1 - gamma))`` is checked online when ``check_bounds`` is set.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "q_error_inf_sq" and q_star is None:
        raise ValueError("q_error_inf_sq needs q_star")
    if spec.kind == "linear":
        if features is None:
            raise ValueError("linear learner needs a feature map")
        check_compatible(mdp, features)

    state = initial_state(mdp, spec, w0, seed)
    ref = None if q_star is None else np.asarray(q_star, dtype=np.float64).reshape(state.w.shape)

    def measure(w):
        if metric == "w_norm_sq":
            return float(np.dot(w.ravel(), w.ravel()))
        return float(np.abs(w - ref).max()) ** 2

    series = np.empty(horizon + 1)
    series[0] = measure(state.w)
    if spec.kind == "linear":
        for t in range(horizon):
            state = linear_q_step(state, mdp, features, spec, schedule)
            if state.diverged:
                return Trajectory(series[: t + 1].copy(), state.diverged_at, state.w)
            series[t + 1] = measure(state.w)
        return Trajectory(series, None, state.w)

    bound = None
    if check_bounds:
        bound = max(float(np.abs(state.w).max()), mdp.reward_bound / (1.0 - mdp.gamma)) * (1.0 + 1e-12)
    # only one entry moves per step, so the metric is maintained incrementally
    n_actions = mdp.n_actions
    if metric == "w_norm_sq":
        parts = (state.w.ravel() ** 2).tolist()
    else:
        parts = (np.abs(state.w - ref).ravel() ** 2).tolist()
        ref_flat = ref.ravel().tolist()
    for t in range(horizon):
        alpha_ok = schedule(state.t) <= 1.0
        state = tabular_q_step(state, mdp, spec, schedule)
        if state.diverged:
            return Trajectory(series[: t + 1].copy(), state.diverged_at, state.w)
        last = state.last
        i = last.s * n_actions + last.a
        v = float(state.w[last.s, last.a])
        if bound is not None and alpha_ok and abs(v) > bound:
            raise BoundednessViolation(f"||q_t||_inf exceeded {bound} at t={state.t}")
        if metric == "w_norm_sq":
            parts[i] = v * v
            series[t + 1] = math.fsum(parts)
        else:
            parts[i] = (v - ref_flat[i]) ** 2
            series[t + 1] = max(parts)
    return Trajectory(series, None, state.w)
