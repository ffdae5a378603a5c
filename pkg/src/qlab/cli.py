"""Command-line entry point.

Exit codes: 0 success, 1 an invariant or lemma check failed, 2 usage or
configuration error, 3 runtime failure (I/O, solver).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .engine import Variant
from .mdp import load_mdp, make_baird, make_random_mdp, save_mdp
from .policies import BehaviorConfig
from .verify import SUITES, run_suite

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("qlab")


class UsageError(Exception):
    pass


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _add_common(p: argparse.ArgumentParser, kappa0: float, source: str) -> None:
    p.add_argument("--kappa0", type=float, default=None,
                   help=f"base inverse temperature (default {kappa0:g}, {source})")
    p.add_argument("--epsilon", type=float, default=None,
                   help=f"exploration weight in (0,1] (default 0.1, {source})")
    p.add_argument("--alpha", type=float, default=None,
                   help=f"constant learning rate (default 0.1, {source})")
    p.add_argument("--horizon", type=int, default=None,
                   help=f"steps per run (default 1500, {source})")
    p.add_argument("--runs", type=int, default=None, help=f"independent runs (default 10, {source})")
    p.add_argument("--seed", type=int, default=0, help="base seed; run i uses seed+i (default 0)")
    p.add_argument("--jobs", type=int, default=ex.default_jobs(), help="worker processes (default: CPU count)")
    p.add_argument("--out", default="results", help="output directory (default results/)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an ensemble from a JSON config")
    p.add_argument("--config", help="ExperimentConfig JSON file (flags override its values)")
    _add_common(p, 100.0, "Baird experiment setup")
    p.add_argument("--metric", choices=("w_norm_sq", "q_error_inf_sq"), default=None,
                   help="tracked metric (default w_norm_sq)")
    p.add_argument("--mdp", help="MDP JSON file to use instead of the config's source")

    p = sub.add_parser("verify", help="run lemma property suites; JSON report on stdout")
    p.add_argument("--suite", required=True, help=f"one of {', '.join(SUITES)}, all")
    p.add_argument("--seeds", type=int, default=100, help="number of random instances (default 100)")
    p.add_argument("--mdp", help="MDP JSON file; every instance then uses this MDP")

    p = sub.add_parser("baird", help="Baird boundedness experiment")
    _add_common(p, 100.0, "Baird experiment setup")

    p = sub.add_parser("compare", help="compare modified linear Q-learning variants on Baird")
    _add_common(p, 10.0, "variant comparison setup")
    p.add_argument("--variant", default="none,target_network,projection,ridge",
                   help="comma-separated subset of none,target_network,projection,ridge")
    p.add_argument("--sync-period", type=int, default=10, help="target sync period (default 10)")
    p.add_argument("--radius", type=float, default=10.0, help="projection radius (default 10)")
    p.add_argument("--eta", type=float, default=0.01, help="ridge coefficient (default 0.01)")

    p = sub.add_parser("export-mdp", help="write a preset MDP as JSON")
    p.add_argument("--preset", choices=("baird", "random"), default="baird")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--states", type=int, default=5)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--out", required=True, help="output JSON path")
    return parser


def _override(config: ex.ExperimentConfig, args) -> ex.ExperimentConfig:
    """Apply flags on top of ``config`` (flags > file > defaults)."""
    learner = config.learner
    behavior = learner.behavior
    if args.kappa0 is not None or args.epsilon is not None:
        behavior = BehaviorConfig(
            args.epsilon if args.epsilon is not None else behavior.epsilon,
            args.kappa0 if args.kappa0 is not None else behavior.kappa0,
        )
    schedule = config.schedule
    if args.alpha is not None:
        schedule = replace(schedule, alpha=args.alpha)
    changes = dict(learner=replace(learner, behavior=behavior), schedule=schedule, base_seed=args.seed)
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if args.runs is not None:
        changes["n_runs"] = args.runs
    if getattr(args, "metric", None) is not None:
        changes["metric"] = args.metric
    if getattr(args, "mdp", None):
        changes["mdp_source"] = ex.MdpSource("file", path=args.mdp)
    return replace(config, **changes)


def _windows(horizon: int) -> tuple[tuple[int, int], tuple[int, int]]:
    if horizon == 1500:
        return (0, 500), (1000, 1500)
    return (0, horizon // 3), ((2 * horizon) // 3, horizon)


def boundedness_check(stats: ex.EnsembleStats, horizon: int) -> tuple[bool, str]:
    """No divergence, all values finite, late max at most twice the early max."""
    early, late = _windows(horizon)
    finite = bool(np.all(np.isfinite(stats.runs)))
    grow_ok, e_max, l_max = ex.bounded_growth(stats, early, late)
    ok = not stats.diverged_runs and finite and grow_ok
    msg = (f"diverged={len(stats.diverged_runs)} finite={finite} "
           f"max{list(early)}={e_max:.6g} max{list(late)}={l_max:.6g}")
    return ok, msg


def cmd_run(args) -> int:
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            config = ex.config_from_dict(json.loads(path.read_text()))
        except (json.JSONDecodeError, TypeError) as exc:
            raise UsageError(f"bad config {path}: {exc}") from exc
    else:
        config = ex.baird_config()
    if args.mdp and not Path(args.mdp).is_file():
        raise UsageError(f"MDP file not found: {args.mdp}")
    config = _override(config, args)
    stats = ex.run_ensemble(config, args.jobs)
    out = ex.export_results(stats, None, Path(args.out) / config.name, config)
    _say(f"{config.name}: final mean {config.metric}={stats.mean[-1]:.6g} "
         f"diverged={len(stats.diverged_runs)}/{config.n_runs} -> {out}")
    return EXIT_OK


def cmd_baird(args) -> int:
    config = _override(ex.baird_config(), args)
    stats = ex.run_ensemble(config, args.jobs)
    ok, msg = boundedness_check(stats, config.horizon)
    ex.export_results(stats, None, Path(args.out) / config.name, config, {"bounded": ok})
    _say(f"baird boundedness {'PASS' if ok else 'FAIL'}: {msg}")
    return EXIT_OK if ok else EXIT_VIOLATION


def _parse_variants(args) -> list[Variant]:
    table = {
        "none": Variant("none"),
        "target_network": Variant("target_network", sync_period=args.sync_period),
        "projection": Variant("projection", radius=args.radius),
        "ridge": Variant("ridge", eta=args.eta),
    }
    names = [n.strip() for n in args.variant.split(",") if n.strip()]
    unknown = [n for n in names if n not in table]
    if unknown or not names:
        raise UsageError(f"unknown variant(s): {', '.join(unknown) or '(empty)'}")
    return [table[n] for n in names]


def cmd_compare(args) -> int:
    if args.kappa0 is None:
        args.kappa0 = 10.0
    variants = _parse_variants(args)
    base = replace(_override(ex.baird_config(kappa0=10.0), args), name="compare")
    results = ex.compare_variants(base, variants, args.jobs)
    all_ok = True
    for v in variants:
        stats = results[v.label]
        ok, msg = boundedness_check(stats, base.horizon)
        if v.kind == "projection":
            top = float(np.sqrt(np.nanmax(stats.runs)))
            proj_ok = top <= v.radius + 1e-12
            msg += f" max_norm={top:.6g}"
            ok = ok and proj_ok
        cfg = replace(base, learner=replace(base.learner, variant=v), name=f"compare-{v.kind}")
        ex.export_results(stats, None, Path(args.out) / cfg.name, cfg, {"variant": v.label, "bounded": ok})
        _say(f"{v.label}: {'PASS' if ok else 'FAIL'} {msg}")
        all_ok = all_ok and ok
    return EXIT_OK if all_ok else EXIT_VIOLATION


def cmd_verify(args) -> int:
    if args.suite not in SUITES + ("all",):
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}, all")
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    mdp = features = None
    if args.mdp:
        if not Path(args.mdp).is_file():
            raise UsageError(f"MDP file not found: {args.mdp}")
        mdp, features = load_mdp(args.mdp)
    if args.suite in ("negdef", "drift", "all") and mdp is not None and features is None:
        raise UsageError("the negdef and drift suites need an MDP file with features")
    reports = run_suite(args.suite, args.seeds, mdp, features)
    print(json.dumps([r.to_json() for r in reports], indent=2))
    failed = [r.lemma for r in reports if not r.ok]
    _say(f"verify {args.suite}: {'all checks passed' if not failed else 'violations in ' + ', '.join(failed)}")
    return EXIT_VIOLATION if failed else EXIT_OK


def cmd_export_mdp(args) -> int:
    if args.preset == "baird":
        mdp, features = make_baird()
    else:
        mdp, features = make_random_mdp(args.seed, args.states, args.actions, args.gamma), None
    save_mdp(args.out, mdp, features)
    _say(f"wrote {args.out}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "verify": cmd_verify,
    "baird": cmd_baird,
    "compare": cmd_compare,
    "export-mdp": cmd_export_mdp,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError, TypeError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    except (OSError, RuntimeError) as exc:
        _say(f"runtime failure: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
