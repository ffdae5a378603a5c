"""Property suites that check the closed-form results on random instances.

Each check returns a :class:`CheckReport`. ``slack`` is ``lhs - rhs`` of the
inequality under test with the tolerance already folded into ``rhs``; an
instance is a violation when its slack is positive.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .mdp import FeatureMap, Mdp, make_random_mdp, random_features
from .oracles import (
    MoreauToolkit,
    drift_linear,
    drift_tabular,
    inner_product_constant,
    mixing_profile,
    moreau_value,
    negdef_certificate,
    pseudo_contraction_factor,
    solve_q_star,
    state_action_kernel,
    update_table,
    weighted_bellman,
)
from .oracles.bellman import linear_stationary
from .oracles.moreau import envelope_objective
from .policies import BehaviorConfig, linear_eps_softmax, uniform_policy

TOL = 1e-9
SUITES = ("pseudo-contraction", "negdef", "moreau", "drift", "mixing")


@dataclass
class CheckReport:
    lemma: str
    instances: int = 0
    violations: int = 0
    max_slack: float = -math.inf
    failing_seeds: list[int] = field(default_factory=list)
    note: str = ""

    def record(self, slack: float, seed: int | None = None) -> None:
        self.instances += 1
        self.max_slack = max(self.max_slack, float(slack))
        if not slack <= 0:
            self.violations += 1
            if seed is not None and seed not in self.failing_seeds:
                self.failing_seeds.append(seed)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_json(self) -> dict:
        doc = asdict(self)
        if not math.isfinite(doc["max_slack"]):
            doc["max_slack"] = None
        return doc


def _instance(seed: int, mdp: Mdp | None = None, gamma_range=(0.5, 0.95)):
    """Random MDP (unless one is supplied), exploration weight and rng for one seed."""
    rng = np.random.default_rng([seed, 7])
    if mdp is None:
        nS = int(rng.integers(2, 6))
        nA = int(rng.integers(2, 4))
        mdp = make_random_mdp(seed, nS, nA, float(rng.uniform(*gamma_range)))
    epsilon = float(rng.uniform(0.01, 1.0))
    return mdp, epsilon, rng


def check_pseudo_contraction(seeds: int, mdp: Mdp | None = None) -> CheckReport:
    """``||T'q - q*||_inf <= (1 - (1 - gamma) min d) ||q - q*||_inf``."""
    rep = CheckReport("pseudo-contraction")
    for seed in range(seeds):
        m, eps, rng = _instance(seed, mdp)
        q_star = solve_q_star(m, 1e-12).q
        q = q_star + rng.normal(scale=rng.uniform(0.1, 10.0), size=q_star.shape)
        lhs = np.abs(weighted_bellman(m, q, eps) - q_star).max()
        rhs = pseudo_contraction_factor(m, q, eps) * np.abs(q - q_star).max() + TOL
        rep.record(lhs - rhs, seed)
    return rep


def check_fixed_point(seeds: int, mdp: Mdp | None = None) -> CheckReport:
    """``T'q* = q*`` and ``h(q*) = 0`` to within 1e-9."""
    rep = CheckReport("fixed-point")
    for seed in range(seeds):
        m, eps, _ = _instance(seed, mdp)
        q_star = solve_q_star(m, 1e-12).q
        err = max(np.abs(weighted_bellman(m, q_star, eps) - q_star).max(), np.abs(drift_tabular(m, q_star, eps)).max())
        rep.record(err - TOL, seed)
    return rep


def check_tabular_inner_product(seeds: int, mdp: Mdp | None = None, q_per_mdp: int = 5) -> CheckReport:
    """``<grad M(q - q*), h(q)> <= -(1 - u_im/l_im beta_m) ||q - q*||_m^2``.

    ``beta_m`` is the largest per-q factor over the sampled q's of an instance
    and ``xi`` starts at 0.25, halved until the coefficient is positive.
    """
    rep = CheckReport("tabular-drift-inner-product")
    for seed in range(seeds):
        m, eps, rng = _instance(seed, mdp)
        q_star = solve_q_star(m, 1e-12).q
        qs = [q_star + rng.normal(scale=rng.uniform(0.1, 10.0), size=q_star.shape) for _ in range(q_per_mdp)]
        beta_m = max(pseudo_contraction_factor(m, q, eps) for q in qs)
        kit = MoreauToolkit.for_contraction(m.n_pairs, beta_m)
        coef = kit.descent_coefficient(beta_m)
        for q in qs:
            mv = moreau_value((q - q_star).ravel(), kit.xi)
            lhs = float(mv.grad @ drift_tabular(m, q, eps).ravel())
            rep.record(lhs + coef * mv.m_norm**2 - TOL, seed)
    return rep


def check_negdef(
    n_mdps: int = 50,
    w_per_mdp: int = 100,
    gamma: float = 0.9,
    epsilon: float = 1e-5,
    kappa0: float = 1e4,
    mdp: Mdp | None = None,
    features: FeatureMap | None = None,
) -> tuple[CheckReport, CheckReport]:
    """Negative-definiteness certificate and the inner-product drift bound.

    Only instances whose beta formula is positive are checked; ``note``
    records how many were inconclusive.
    """
    cfg = BehaviorConfig(epsilon, kappa0)
    quad_rep = CheckReport("negdef")
    inner_rep = CheckReport("linear-drift-inner-product")
    inconclusive = 0
    for seed in range(n_mdps):
        rng = np.random.default_rng([seed, 11])
        if mdp is None:
            m = make_random_mdp(seed, int(rng.integers(2, 5)), 2, gamma)
            X = random_features(seed, m, int(rng.integers(2, m.n_pairs + 1)))
        else:
            m, X = mdp, features
        C = inner_product_constant(m, X)
        for _ in range(w_per_mdp):
            w = rng.normal(size=X.dim)
            w *= rng.uniform(1.0, 100.0) / np.linalg.norm(w)
            cert = negdef_certificate(m, X, w, cfg)
            if not cert.conclusive:
                inconclusive += 1
                continue
            quad_rep.record(cert.quad + cert.beta_formula * cert.norm_sq - TOL, seed)
            h = drift_linear(m, X, w, cfg).h
            nw = math.sqrt(cert.norm_sq)
            inner_rep.record(float(w @ h) + cert.beta_formula * cert.norm_sq - C * nw - TOL, seed)
    quad_rep.note = inner_rep.note = f"{inconclusive} inconclusive (beta <= 0) of {n_mdps * w_per_mdp}"
    return quad_rep, inner_rep


def golden_value(q: np.ndarray, xi: float) -> float:
    """Minimum of the 1-D envelope objective by golden-section search."""
    mags = np.abs(np.ravel(q)).tolist()
    top = max(mags, default=0.0)
    if top == 0.0:
        return 0.0

    # plain floats: the search makes ~50 evaluations on short vectors
    def g(m):
        return 0.5 * m * m + sum((a - m) ** 2 for a in mags if a > m) / (2.0 * xi)

    res = minimize_scalar(g, bracket=(0.0, top), method="golden", tol=1e-10)
    return envelope_objective(q, xi, float(res.x))


def check_moreau(n_vectors: int = 10_000, dim: int = 8, xis=(0.1, 0.25, 1.0), seed: int = 0) -> list[CheckReport]:
    """Smoothness, norm equivalence, gradient inner products and the 1-D oracle."""
    reps = {k: CheckReport(f"moreau-{k}") for k in ("smoothness", "norm-equivalence", "inner-product", "golden-section")}
    rng = np.random.default_rng(seed)
    for xi in xis:
        kit = MoreauToolkit(xi, dim)
        for i in range(n_vectors):
            scale = 10.0 ** rng.uniform(-2, 1)
            x, y, z = (rng.normal(scale=scale, size=dim) for _ in range(3))
            mx, my, mz = moreau_value(x, xi), moreau_value(y, xi), moreau_value(z, xi)
            diff = y - x
            rhs = mx.value + float(mx.grad @ diff) + float(diff @ diff) / xi
            reps["smoothness"].record(my.value - rhs - TOL, i)
            inf = float(np.abs(x).max())
            reps["norm-equivalence"].record(
                max(kit.l_im * mx.m_norm - inf, inf - kit.u_im * mx.m_norm) - TOL, i
            )
            reps["inner-product"].record(
                max(mx.m_norm**2 - float(mx.grad @ x), float(mx.grad @ z) - mx.m_norm * mz.m_norm)
                - TOL,
                i,
            )
            reps["golden-section"].record(abs(mx.value - golden_value(x, xi)) - 1e-10, i)
    return list(reps.values())


def stationary_updates(
    mdp: Mdp, features: FeatureMap, w: np.ndarray, cfg: BehaviorConfig, n_samples: int, seed: int,
    n_chains: int = 1000,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo mean of ``H(w, Y)`` with ``Y`` the stationary transition chain.

    Runs ``n_chains`` independent chains started from the stationary
    distribution (so every sample is stationary) for ``n_samples / n_chains``
    steps each. Returns the mean and its standard error from the spread of
    per-chain means.
    """
    rng = np.random.default_rng(seed)
    nS, nA = mdp.n_states, mdp.n_actions
    mu = linear_eps_softmax(w, features, cfg, nA)
    d = linear_stationary(mdp, features, w, cfg)
    H = update_table(mdp, features, w).reshape(nS * nA * nS, -1)
    steps = n_samples // n_chains
    mu_cdf = np.cumsum(mu, axis=1)
    p_cdf = np.cumsum(mdp.transition.reshape(nS * nA, nS), axis=1)
    pair = np.searchsorted(np.cumsum(d), rng.random(n_chains), side="right").clip(max=nS * nA - 1)
    s, a = np.divmod(pair, nA)
    sums = np.zeros((n_chains, features.dim))
    for _ in range(steps):
        u = rng.random(n_chains)
        s_next = (p_cdf[s * nA + a] <= u[:, None]).sum(axis=1).clip(max=nS - 1)
        sums += H[(s * nA + a) * nS + s_next]
        s = s_next
        u = rng.random(n_chains)
        a = (mu_cdf[s] <= u[:, None]).sum(axis=1).clip(max=nA - 1)
    means = sums / steps
    return means.mean(axis=0), means.std(axis=0, ddof=1) / math.sqrt(n_chains)


def check_drift(
    n_mdps: int = 10, w_per_mdp: int = 5, n_samples: int = 10**6, dim: int = 3, sigmas: float = 3.0,
    mdp: Mdp | None = None, features: FeatureMap | None = None,
) -> tuple[CheckReport, CheckReport]:
    """Exact drift against enumeration (to 1e-10) and against Monte Carlo (within ``sigmas`` SE)."""
    from .oracles import expected_update

    exact = CheckReport("drift-enumeration")
    mc = CheckReport("drift-monte-carlo")
    cfg = BehaviorConfig(0.1, 10.0)
    for seed in range(n_mdps):
        rng = np.random.default_rng([seed, 13])
        if mdp is None:
            m = make_random_mdp(seed, int(rng.integers(2, 5)), 2, float(rng.uniform(0.5, 0.95)))
            X = random_features(seed, m, dim)
        else:
            m, X = mdp, features
        for k in range(w_per_mdp):
            w = rng.normal(scale=rng.uniform(0.1, 5.0), size=X.dim)
            drift = drift_linear(m, X, w, cfg)
            exact.record(float(np.abs(drift.h - expected_update(m, X, w, cfg)).max()) - 1e-10, seed)
            mean, se = stationary_updates(m, X, w, cfg, n_samples, seed=seed * 1000 + k)
            z = np.abs(mean - drift.h) / np.maximum(se, 1e-300)
            mc.record(float(z.max()) - sigmas, seed)
    return exact, mc


def check_mixing(seeds: int, mdp: Mdp | None = None, n_max: int = 200) -> list[CheckReport]:
    """Two-state closed form plus monotonicity on random uniform-policy kernels."""
    closed = CheckReport("mixing-two-state")
    P = np.array([[0.7, 0.3], [0.4, 0.6]])
    prof = mixing_profile(P, 60)
    closed.record(abs(prof.tau - 0.3) - 1e-6)
    monotone = CheckReport("mixing-monotone")
    for seed in range(seeds):
        m, _, _ = _instance(seed, mdp)
        K = state_action_kernel(m, uniform_policy(m.n_states, m.n_actions))
        prof = mixing_profile(K, n_max)
        curve_slack = float(np.max(np.diff(prof.tv_curve), initial=-math.inf)) - 1e-12
        alphas = np.logspace(-12, 0, 25)
        taus = [prof.tau_alpha(a) for a in alphas]
        tau_slack = float(np.max(np.diff(taus), initial=-1))  # counts go down as alpha grows
        range_slack = max(-prof.tau, prof.tau - 1.0 + 1e-15)
        monotone.record(max(curve_slack, tau_slack, range_slack), seed)
    return [closed, monotone]


def run_suite(name: str, seeds: int, mdp: Mdp | None = None, features: FeatureMap | None = None) -> list[CheckReport]:
    """Dispatch a named suite; ``seeds`` scales the number of random instances."""
    if name == "all":
        return [r for s in SUITES for r in run_suite(s, seeds, mdp, features)]
    if name == "pseudo-contraction":
        return [
            check_pseudo_contraction(seeds, mdp),
            check_fixed_point(seeds, mdp),
            check_tabular_inner_product(max(1, seeds // 5), mdp),
        ]
    if name == "negdef":
        return list(check_negdef(n_mdps=seeds, w_per_mdp=20, mdp=mdp, features=features))
    if name == "moreau":
        return check_moreau(n_vectors=seeds)
    if name == "drift":
        return list(check_drift(n_mdps=seeds, w_per_mdp=2, n_samples=10**5, mdp=mdp, features=features))
    if name == "mixing":
        return check_mixing(seeds, mdp)
    raise KeyError(name)
