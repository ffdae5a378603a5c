"""State-action kernels, stationary distributions and mixing profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..mdp import Mdp
from ..policies import check_policy

FIT_FLOOR = 1e-13


class StationaryError(RuntimeError):
    """Raised when no unique stationary distribution can be certified."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class MixingFitError(RuntimeError):
    pass


def state_action_kernel(mdp: Mdp, pi: np.ndarray) -> np.ndarray:
    """``P_pi[(s,a),(s',a')] = p(s'|s,a) pi(a'|s')`` as a dense matrix."""
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {pi.shape} does not match MDP {(mdp.n_states, mdp.n_actions)}")
    check_policy(pi)
    K = mdp.transition[:, :, :, None] * pi[None, None, :, :]
    return K.reshape(mdp.n_pairs, mdp.n_pairs)


@dataclass(frozen=True)
class StationaryDist:
    dist: np.ndarray
    residual: float


def _residual(d: np.ndarray, P: np.ndarray) -> float:
    return float(np.abs(d @ P - d).sum())


def stationary_distribution(P: np.ndarray, tol: float = 1e-10, max_iter: int = 10**6) -> StationaryDist:
    """Unique invariant distribution of a row-stochastic matrix.

    Solves ``(I - P^T) d = 0`` together with ``sum(d) = 1``. Chains with more
    than one closed class are rejected. Falls back to power iteration when the
    direct solve does not meet ``tol``.
    """
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    M = np.vstack([np.eye(n) - P.T, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    d, _, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
    if rank < n:
        raise StationaryError("stationary distribution is not unique (more than one closed class)")
    d = np.clip(d, 0.0, None)
    d /= d.sum()
    res = _residual(d, P)
    if res <= tol:
        return StationaryDist(d, res)

    d = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = d @ P
        if np.abs(nxt - d).sum() < 1e-12:
            d = nxt / nxt.sum()
            break
        d = nxt
    res = _residual(d, P)
    if res > tol:
        raise StationaryError(f"power iteration did not converge (residual {res:.3e})", res)
    return StationaryDist(d, res)


@dataclass(frozen=True)
class MixingProfile:
    """Sup-over-starts l1 distance to stationarity and its geometric fit.

    ``tv_curve[n]`` is the distance after ``n`` steps, starting at ``n = 0``.
    """

    tv_curve: np.ndarray
    c0: float
    tau: float

    def tau_alpha(self, alpha: float) -> int:
        """Fewest steps ``n >= 0`` with ``c0 * tau**n <= alpha``."""
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.c0 <= alpha:
            return 0
        n = math.ceil(math.log(alpha / self.c0) / math.log(self.tau))
        # guard the ceil against rounding at exact powers
        while n > 0 and self.c0 * self.tau ** (n - 1) <= alpha:
            n -= 1
        while self.c0 * self.tau**n > alpha:
            n += 1
        return n


def mixing_profile(P: np.ndarray, n_max: int, d: np.ndarray | None = None) -> MixingProfile:
    """Measure and fit ``sup_y ||P^n(y, .) - d||_1 <= c0 tau^n``.

    Powers are taken of the deviation kernel ``P - 1 d^T``, whose n-th power
    equals ``P^n - 1 d^T``; this keeps relative accuracy in the tail.
    """
    P = np.asarray(P, dtype=np.float64)
    if d is None:
        d = stationary_distribution(P).dist
    n = P.shape[0]
    E = np.eye(n) - d[None, :]
    Dev = P - d[None, :]
    curve = np.empty(n_max + 1)
    curve[0] = np.abs(E).sum(axis=1).max()
    for k in range(1, n_max + 1):
        E = E @ Dev
        curve[k] = np.abs(E).sum(axis=1).max()
    curve = np.minimum.accumulate(curve)

    # strictly decreasing prefix above the floor
    idx = [0] if curve[0] > FIT_FLOOR else []
    for k in range(1, n_max + 1):
        if curve[k] <= FIT_FLOOR or curve[k] >= curve[k - 1]:
            break
        idx.append(k)
    if not idx:
        raise MixingFitError("distance to stationarity is already below the fit floor")
    if len(idx) == 1:
        if idx[0] + 1 <= n_max and curve[idx[0] + 1] <= FIT_FLOOR:
            # mixed exactly in one step: any tau works, take the smallest normal float
            return MixingProfile(curve, float(curve[idx[0]]), float(np.finfo(float).tiny))
        raise MixingFitError("distance to stationarity does not decay")
    ns = np.asarray(idx, dtype=float)
    slope, intercept = np.polyfit(ns, np.log(curve[idx]), 1)
    tau = math.exp(slope)
    if not 0.0 < tau < 1.0:
        raise MixingFitError(f"fitted rate {tau} is not in (0, 1)")
    return MixingProfile(curve, math.exp(intercept), tau)
