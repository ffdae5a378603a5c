"""Moreau envelope of ``0.5 * ||.||_inf^2`` with a Euclidean proximity term.

``M(q) = min_u 0.5 ||u||_inf^2 + ||q - u||_2^2 / (2 xi)``. For a fixed bound
``m = ||u||_inf`` the best ``u`` clips ``q`` to ``[-m, m]``, so the problem
reduces to the convex piecewise quadratic

    g(m) = 0.5 m^2 + sum_i (|q_i| - m)_+^2 / (2 xi),

whose breakpoints are the sorted ``|q_i|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MoreauValue:
    value: float
    grad: np.ndarray
    m_norm: float
    threshold: float


def envelope_objective(q: np.ndarray, xi: float, m: float) -> float:
    excess = np.maximum(np.abs(q) - m, 0.0)
    return 0.5 * m * m + float(excess @ excess) / (2.0 * xi)


def optimal_threshold(q: np.ndarray, xi: float) -> float:
    """Exact minimiser of ``g`` over ``m >= 0`` by scanning segments."""
    a = sorted(np.abs(np.ravel(q)).tolist(), reverse=True)
    if not a or a[0] == 0.0:
        return 0.0
    # with the k largest entries above m, g'(m) = 0 gives m = S_k / (xi + k)
    partial = 0.0
    n = len(a)
    for k in range(1, n + 1):
        partial += a[k - 1]
        m = partial / (xi + k)
        lower = a[k] if k < n else 0.0
        if m >= lower:
            # rounding can push m just above a[k-1]; clip back onto the segment
            return min(m, a[k - 1])
    return 0.0


def moreau_value(q: np.ndarray, xi: float) -> MoreauValue:
    if not xi > 0:
        raise ValueError("xi must be positive")
    q = np.asarray(q, dtype=np.float64)
    m = optimal_threshold(q, xi)
    u = np.clip(q, -m, m)
    value = envelope_objective(q, xi, m)
    return MoreauValue(value, (q - u) / xi, math.sqrt(2.0 * value), m)


@dataclass(frozen=True)
class MoreauToolkit:
    """Norm-equivalence constants between ``||.||_inf`` and ``||.||_m``."""

    xi: float
    dim: int

    @property
    def l_it(self) -> float:
        return 1.0 / math.sqrt(self.dim)

    @property
    def u_it(self) -> float:
        return 1.0

    @property
    def l_im(self) -> float:
        return math.sqrt(1.0 + self.xi * self.l_it**2)

    @property
    def u_im(self) -> float:
        return math.sqrt(1.0 + self.xi * self.u_it**2)

    def descent_coefficient(self, beta_m: float) -> float:
        """``1 - (u_im / l_im) beta_m``; positive means the drift bound is informative."""
        return 1.0 - self.u_im / self.l_im * beta_m

    @classmethod
    def for_contraction(cls, dim: int, beta_m: float, xi: float = 0.25) -> "MoreauToolkit":
        """Halve ``xi`` from its starting value until the descent coefficient is positive."""
        if not 0 < beta_m < 1:
            raise ValueError("beta_m must be in (0, 1)")
        kit = cls(xi, dim)
        while kit.descent_coefficient(beta_m) <= 0:
            kit = cls(kit.xi / 2, dim)
        return kit
