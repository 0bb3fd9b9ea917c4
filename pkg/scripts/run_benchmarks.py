"""Train every shipped config and print a solve table.

    python scripts/run_benchmarks.py --seeds 0-9 --out runs/bench
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

from qigmn.harness import ExperimentConfig, run_experiment

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def parse_seeds(text):
    if "-" in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=parse_seeds, default=list(range(10)))
    ap.add_argument("--out", default="runs/bench")
    ap.add_argument("--only", nargs="*", help="config names without .json")
    ap.add_argument("--parallel", action="store_true")
    args = ap.parse_args()

    rows = []
    for path in sorted(CONFIGS.glob("*.json")):
        if args.only and path.stem not in args.only:
            continue
        cfg = ExperimentConfig.load(path)
        cfg = replace(cfg, seeds=args.seeds, out_dir=str(Path(args.out) / path.stem))
        s = run_experiment(cfg, parallel=args.parallel)
        rows.append((path.stem, s))
        print(f"{path.stem}: {json.dumps([x['solve_episode'] for x in s['seeds']])}", flush=True)

    print()
    print(f"{'config':<18}{'solved':>8}{'median':>9}{'mean':>9}{'std':>9}{'K med':>7}")
    for name, s in rows:
        fmt = lambda v: "-" if v is None else f"{v:.1f}"
        print(
            f"{name:<18}{s['solved_count']:>5}/{s['seed_count']:<2}"
            f"{fmt(s['solve_median_all']):>9}{fmt(s['solve_mean_successful']):>9}"
            f"{fmt(s['solve_std_successful']):>9}{s['final_components_median']:>7}"
        )


if __name__ == "__main__":
    main()
