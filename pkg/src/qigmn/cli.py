"""Command line entry point: ``qigmn train | evaluate | list-envs``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import envs
from .harness import ExperimentConfig, evaluate, run_experiment


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qigmn", description="Q-learning with an incremental Gaussian mixture.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one agent per seed from a JSON config")
    train.add_argument("--config", required=True, help="flat JSON experiment config")
    train.add_argument("--seeds", type=_seed_list, help="override the config seeds, e.g. 0,1,2")
    train.add_argument("--out", help="override the output directory")
    train.add_argument("--max-episodes", type=int, help="override max_episodes")
    train.add_argument("--parallel", action="store_true", help="one worker process per seed")

    ev = sub.add_parser("evaluate", help="run a saved model greedily")
    ev.add_argument("--model", required=True)
    ev.add_argument("--env", required=True, choices=envs.ENV_NAMES)
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--seed", type=int, default=0)

    sub.add_parser("list-envs", help="print the available environments")
    return parser


def _train(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    overrides = {}
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.max_episodes is not None:
        overrides["max_episodes"] = args.max_episodes
    if overrides:
        cfg = replace(cfg, **overrides)
    summary = run_experiment(cfg, parallel=args.parallel)
    for s in summary["seeds"]:
        status = s["error"] or (f"solved at {s['solve_episode']}" if s["solve_episode"] is not None else "not solved")
        print(f"seed {s['seed']}: {status}, {s['episodes']} episodes, {s['final_components']} components")
    print(
        f"{summary['solved_count']}/{summary['seed_count']} solved, "
        f"median {summary['solve_median_all']}, "
        f"mean {summary['solve_mean_successful']} std {summary['solve_std_successful']}"
    )
    return 1 if summary["aborted"] else 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            return _train(args)
        if args.command == "evaluate":
            print(json.dumps(evaluate(args.model, args.env, args.episodes, args.seed), indent=2))
            return 0
        for name in envs.ENV_NAMES:
            spec = envs.spec_for(name)
            print(f"{name}\tobs={spec.observation_dim}\tactions={spec.action_count}\tsteps={spec.max_steps}\tsolve>={spec.solve_threshold}")
        return 0
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
