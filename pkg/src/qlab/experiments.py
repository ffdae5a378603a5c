"""Seeded ensembles, rate fits, variant comparison and CSV/JSON export."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np

from .engine import LearnerSpec, LearningRateSchedule, Trajectory, Variant, run_trajectory
from .mdp import FeatureMap, Mdp, identity_features, load_mdp, make_baird, make_random_mdp, random_features
from .oracles import solve_q_star
from .policies import BehaviorConfig

log = logging.getLogger(__name__)

CSV_HEADER = ("t", "mean", "min", "max", "var", "n_alive")


@dataclass(frozen=True)
class MdpSource:
    """Where the environment comes from: ``baird``, ``random`` or ``file``."""

    kind: Literal["baird", "random", "file"] = "baird"
    seed: int = 0
    n_states: int = 5
    n_actions: int = 2
    gamma: float = 0.9
    feature_dim: int | None = None
    path: str | None = None

    def build(self) -> tuple[Mdp, FeatureMap]:
        if self.kind == "baird":
            return make_baird()
        if self.kind == "random":
            mdp = make_random_mdp(self.seed, self.n_states, self.n_actions, self.gamma)
            if self.feature_dim is None:
                return mdp, identity_features(mdp)
            return mdp, random_features(self.seed, mdp, self.feature_dim)
        if self.kind == "file":
            if self.path is None:
                raise ValueError("file source needs a path")
            mdp, features = load_mdp(self.path)
            return mdp, features if features is not None else identity_features(mdp)
        raise ValueError(f"unknown mdp source {self.kind!r}")


@dataclass(frozen=True)
class InitSpec:
    """Initial iterate: ``ones``, ``zeros``, ``constant`` (``value``) or explicit ``vector``."""

    kind: Literal["ones", "zeros", "constant", "vector"] = "ones"
    value: float = 1.0
    vector: tuple[float, ...] | None = None

    def build(self, size: int) -> np.ndarray:
        if self.kind == "ones":
            return np.ones(size)
        if self.kind == "zeros":
            return np.zeros(size)
        if self.kind == "constant":
            return np.full(size, float(self.value))
        if self.kind == "vector":
            w = np.asarray(self.vector, dtype=np.float64)
            if w.shape != (size,):
                raise ValueError(f"initial vector has length {w.size}, expected {size}")
            return w
        raise ValueError(f"unknown init kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    mdp_source: MdpSource = field(default_factory=MdpSource)
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    schedule: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    horizon: int = 1500
    n_runs: int = 10
    base_seed: int = 0
    metric: Literal["w_norm_sq", "q_error_inf_sq"] = "w_norm_sq"
    w0_spec: InitSpec = field(default_factory=InitSpec)
    name: str = "experiment"

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.metric not in ("w_norm_sq", "q_error_inf_sq"):
            raise ValueError(f"unknown metric {self.metric!r}")


def baird_config(
    kappa0: float = 100.0,
    epsilon: float = 0.1,
    alpha: float = 0.1,
    horizon: int = 1500,
    n_runs: int = 10,
    base_seed: int = 0,
    variant: Variant | None = None,
) -> ExperimentConfig:
    """Baird preset: constant step 0.1, kappa0 100, epsilon 0.1, all-ones start."""
    return ExperimentConfig(
        mdp_source=MdpSource("baird"),
        learner=LearnerSpec("linear", BehaviorConfig(epsilon, kappa0), variant or Variant()),
        schedule=LearningRateSchedule("constant", alpha),
        horizon=horizon,
        n_runs=n_runs,
        base_seed=base_seed,
        metric="w_norm_sq",
        w0_spec=InitSpec("ones"),
        name="baird",
    )


# --- config (de)serialisation ------------------------------------------------


def config_to_dict(config: ExperimentConfig) -> dict:
    doc = asdict(config)
    if doc["w0_spec"]["vector"] is not None:
        doc["w0_spec"]["vector"] = list(doc["w0_spec"]["vector"])
    return doc


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Inverse of :func:`config_to_dict`; unknown keys are rejected."""
    doc = dict(doc)
    learner = dict(doc.pop("learner", {}))
    behavior = BehaviorConfig(**learner.pop("behavior", {}))
    variant = Variant(**learner.pop("variant", {}))
    w0 = dict(doc.pop("w0_spec", {}))
    if w0.get("vector") is not None:
        w0["vector"] = tuple(w0["vector"])
    return ExperimentConfig(
        mdp_source=MdpSource(**doc.pop("mdp_source", {})),
        learner=LearnerSpec(behavior=behavior, variant=variant, **learner),
        schedule=LearningRateSchedule(**doc.pop("schedule", {})),
        w0_spec=InitSpec(**w0),
        **doc,
    )


# --- ensembles ---------------------------------------------------------------


@dataclass
class EnsembleStats:
    """Pointwise statistics of one metric across runs.

    Runs that diverged contribute only up to the step before divergence;
    ``n_alive[t]`` counts the runs still contributing at step ``t``.
    """

    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray
    var: np.ndarray
    n_alive: np.ndarray
    diverged_runs: list[tuple[int, int]] = field(default_factory=list)
    runs: np.ndarray | None = None

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.mean))

    @property
    def n_runs(self) -> int:
        return int(self.n_alive[0])

    @property
    def all_diverged(self) -> bool:
        return len(self.diverged_runs) == self.n_runs

    def __eq__(self, other):
        if not isinstance(other, EnsembleStats):
            return NotImplemented
        arrays = ("mean", "min", "max", "var", "n_alive")
        return self.diverged_runs == other.diverged_runs and all(
            np.array_equal(getattr(self, k), getattr(other, k), equal_nan=True) for k in arrays
        )


def aggregate(series: list[np.ndarray], horizon: int, diverged: list[tuple[int, int]] | None = None) -> EnsembleStats:
    """Order-free reduction: values are sorted per step before summing."""
    runs = np.full((len(series), horizon + 1), np.nan)
    for i, s in enumerate(series):
        runs[i, : len(s)] = s
    alive = ~np.isnan(runs)
    n_alive = alive.sum(axis=0)
    ordered = np.sort(runs, axis=0)  # NaNs sort last
    with np.errstate(invalid="ignore", divide="ignore"):
        total = np.nansum(ordered, axis=0)
        mean = np.where(n_alive > 0, total / np.maximum(n_alive, 1), np.nan)
        dev = np.sort((runs - mean) ** 2, axis=0)
        var = np.where(n_alive > 1, np.nansum(dev, axis=0) / np.maximum(n_alive - 1, 1), 0.0)
        var = np.where(n_alive > 0, var, np.nan)
    mn = np.where(n_alive > 0, np.nanmin(np.where(alive, runs, np.inf), axis=0), np.nan)
    mx = np.where(n_alive > 0, np.nanmax(np.where(alive, runs, -np.inf), axis=0), np.nan)
    # rounding in the mean can put it a hair outside the envelope
    mean = np.clip(mean, mn, mx)
    return EnsembleStats(mean, mn, mx, var, n_alive, sorted(diverged or []), runs)


def _run_one(args) -> Trajectory:
    mdp, features, config, run_index, q_star = args
    w0 = config.w0_spec.build(mdp.n_pairs if config.learner.kind == "tabular" else features.dim)
    return run_trajectory(
        mdp, features, config.learner, config.schedule, config.horizon,
        config.base_seed + run_index, w0, config.metric, q_star,
    )


def default_jobs() -> int:
    return os.cpu_count() or 1


def run_ensemble(config: ExperimentConfig, jobs: int = 1) -> EnsembleStats:
    """Run ``n_runs`` seeded trajectories (seed ``base_seed + i``) and aggregate.

    With ``jobs > 1`` runs go to a process pool; results are collected by run
    index, so the statistics do not depend on scheduling.
    """
    mdp, features = config.mdp_source.build()
    q_star = solve_q_star(mdp, 1e-12).q if config.metric == "q_error_inf_sq" else None
    tasks = [(mdp, features, config, i, q_star) for i in range(config.n_runs)]
    if jobs > 1 and config.n_runs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, config.n_runs)) as pool:
            trajectories = list(pool.map(_run_one, tasks))
    else:
        trajectories = [_run_one(t) for t in tasks]
    diverged = [(i, tr.diverged_at) for i, tr in enumerate(trajectories) if tr.diverged_at is not None]
    stats = aggregate([tr.series for tr in trajectories], config.horizon, diverged)
    if diverged:
        log.warning("%d of %d runs diverged", len(diverged), config.n_runs)
    return stats


# --- rate fits ---------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of ``log(mean)`` on a transformed time axis.

    ``power_law``: regressor ``log(t + t0)``, so ``exponent`` is the decay power.
    ``exp_poly``: regressor ``(t + t0)^(1 - eps_alpha)``, so ``exponent`` is the
    coefficient in ``exp(exponent * (t + t0)^(1 - eps_alpha))``.
    """

    window: tuple[int, int]
    model: str
    exponent: float
    intercept: float
    r_squared: float


def fit_rate(
    stats: EnsembleStats | np.ndarray,
    window: tuple[int, int],
    model: Literal["power_law", "exp_poly"] = "power_law",
    t0: float = 0.0,
    eps_alpha: float = 1.0,
) -> RateFit:
    mean = stats.mean if isinstance(stats, EnsembleStats) else np.asarray(stats, dtype=np.float64)
    lo, hi = window
    if not 0 <= lo < hi < len(mean):
        raise ValueError(f"window {window} outside [0, {len(mean) - 1}]")
    t = np.arange(lo, hi + 1, dtype=np.float64)
    y = mean[lo : hi + 1]
    if len(t) < 3:
        raise ValueError("window needs at least 3 points")
    if not np.all(y > 0):
        raise ValueError("metric must be strictly positive on the fit window")
    if model == "power_law":
        x = np.log(t + t0)
    elif model == "exp_poly":
        if not 0 <= eps_alpha < 1:
            raise ValueError("exp_poly needs eps_alpha in [0, 1)")
        x = (t + t0) ** (1.0 - eps_alpha)
    else:
        raise ValueError(f"unknown model {model!r}")
    logy = np.log(y)
    slope, intercept = np.polyfit(x, logy, 1)
    resid = logy - (slope * x + intercept)
    ss_tot = float(((logy - logy.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return RateFit((lo, hi), model, float(slope), float(intercept), min(max(r2, 0.0), 1.0))


# --- variant comparison ------------------------------------------------------

DEFAULT_VARIANTS = (
    Variant("none"),
    Variant("target_network", sync_period=10),
    Variant("projection", radius=10.0),
    Variant("ridge", eta=0.01),
)


def compare_variants(
    base_config: ExperimentConfig, variants=DEFAULT_VARIANTS, jobs: int = 1
) -> dict[str, EnsembleStats]:
    """Run each variant with the base config's seeds; keys are variant labels."""
    if base_config.learner.kind != "linear":
        raise ValueError("variant comparison needs a linear learner")
    results = {}
    for v in variants:
        cfg = replace(base_config, learner=replace(base_config.learner, variant=v))
        results[v.label] = run_ensemble(cfg, jobs)
    return results


# --- export ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_stats_csv(stats: EnsembleStats, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t in range(len(stats.mean)):
            writer.writerow([t, _fmt(stats.mean[t]), _fmt(stats.min[t]), _fmt(stats.max[t]),
                             _fmt(stats.var[t]), int(stats.n_alive[t])])


def read_stats_csv(path: str | Path) -> EnsembleStats:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return EnsembleStats(data[:, 1], data[:, 2], data[:, 3], data[:, 4], data[:, 5].astype(int))


def export_results(
    stats: EnsembleStats,
    fit: RateFit | None,
    out_dir: str | Path,
    config: ExperimentConfig | None = None,
    extra: dict | None = None,
) -> Path:
    """Write ``stats.csv`` and ``meta.json`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_stats_csv(stats, out / "stats.csv")
        meta = {
            "config": config_to_dict(config) if config is not None else None,
            "git_describe": git_describe(),
            "fit": asdict(fit) if fit is not None else None,
            "diverged_runs": [list(d) for d in stats.diverged_runs],
        }
        if extra:
            meta.update(extra)
        (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return out


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def bounded_growth(stats: EnsembleStats, early: tuple[int, int] = (0, 500), late: tuple[int, int] = (1000, 1500)) -> tuple[bool, float, float]:
    """Stationarity proxy: max of the late window is at most twice the early one.

    Uses the per-step maximum over runs; returns ``(ok, early_max, late_max)``.
    """
    early_max = float(np.max(stats.max[early[0] : early[1] + 1]))
    late_max = float(np.max(stats.max[late[0] : late[1] + 1]))
    return late_max <= 2.0 * early_max, early_max, late_max
