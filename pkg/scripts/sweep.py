"""Random hyperparameter search on top of a base config.

Each sampled config trains every seed until early stop or ``--cap`` episodes,
then scores the frozen greedy policy. A seed counts as good when the agent
froze and its greedy mean return meets the task's solve threshold.

    python scripts/sweep.py configs/cartpole_v0.json \\
        --space '{"beta": [0.1, 0.3], "sigma_fraction": [0.2, 0.3]}' --trials 20
"""

import argparse
import json
from dataclasses import replace

import numpy as np

from qigmn.harness import ExperimentConfig, _seeds, evaluate_agent, run_episode


def score(cfg, seed, cap, eval_episodes):
    env = cfg.make_env()
    agent_seed, env_seed = _seeds(seed)
    agent = cfg.build_agent(env.spec, agent_seed)
    for ep in range(cap):
        run_episode(agent, env, env.reset(env_seed if ep == 0 else None))
        if agent.frozen:
            break
    if not agent.frozen:
        return None
    greedy = float(np.mean(evaluate_agent(agent, cfg.make_env(), eval_episodes, seed=10_000 + seed)))
    return ep, greedy, len(agent.model)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config")
    ap.add_argument("--space", required=True, help="JSON object: key -> list of candidate values")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--cap", type=int, default=60)
    ap.add_argument("--eval-episodes", type=int, default=10)
    ap.add_argument("--rng", type=int, default=0)
    args = ap.parse_args()

    base = ExperimentConfig.load(args.config)
    space = json.loads(args.space)
    rng = np.random.default_rng(args.rng)
    threshold = base.make_env().spec.solve_threshold
    for _ in range(args.trials):
        over = {k: v[int(rng.integers(len(v)))] for k, v in space.items()}
        cfg = replace(base, **over)
        out = [score(cfg, s, args.cap, args.eval_episodes) for s in range(args.seeds)]
        good = sum(1 for o in out if o is not None and o[1] >= threshold)
        print(good, json.dumps(over), out, flush=True)


if __name__ == "__main__":
    main()
