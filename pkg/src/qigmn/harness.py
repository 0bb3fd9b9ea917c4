"""Seeded training and evaluation runs, per-seed CSV logs and JSON summaries."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import envs
from .agent import AgentConfig, QIGMNAgent, Transition, mixture_config
from .gmm import Mixture, NumericalFailure

log = logging.getLogger(__name__)

CSV_HEADER = ("episode", "return", "steps", "components", "ms")


@dataclass
class ExperimentConfig:
    env: str = "cartpole_v0"
    seeds: list[int] = field(default_factory=lambda: [0])
    max_episodes: int = 300
    out_dir: str = "runs"
    stop_when_solved: bool = True
    record_wall_time: bool = False
    # agent
    gamma: float = 0.99
    epsilon: float = 1.0
    epsilon_decay: float = 0.9
    epsilon_min: float = 0.0
    q_alpha: float = 0.1
    q_alpha_decay: float = 0.999
    q_alpha_min: float = 0.01
    replay_size: int | None = None
    early_stop_threshold: float | None = None
    early_stop_window: int = 100
    # mixture
    beta: float = 0.1
    sigma_fraction: float = 0.3
    q_range: float = 1.0
    q_sigma_fraction: float | None = None
    pruning_enabled: bool = False
    v_min: float = 5.0
    sp_min: float = 3.0
    # environment
    cart_velocity_cap: float = 3.0
    pole_velocity_cap: float = 4.0

    def __post_init__(self) -> None:
        if self.env not in envs.ENV_NAMES:
            raise ValueError(f"unknown env {self.env!r}")
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.max_episodes < 1:
            raise ValueError("max_episodes must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a flat JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of everything that affects results (output location excluded)."""
        d = self.to_dict()
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def env_kwargs(self) -> dict:
        if self.env.startswith("cartpole"):
            return {"cart_velocity_cap": self.cart_velocity_cap, "pole_velocity_cap": self.pole_velocity_cap}
        return {}

    def make_env(self) -> envs.Environment:
        return envs.make(self.env, **self.env_kwargs())

    def build_agent(self, spec: envs.EnvSpec, seed: int) -> QIGMNAgent:
        agent_cfg = AgentConfig(
            action_count=spec.action_count,
            gamma=self.gamma,
            epsilon=self.epsilon,
            epsilon_decay=self.epsilon_decay,
            epsilon_min=self.epsilon_min,
            q_alpha=self.q_alpha,
            q_alpha_decay=self.q_alpha_decay,
            q_alpha_min=self.q_alpha_min,
            replay_size=self.replay_size or spec.max_steps,
            early_stop_threshold=self.early_stop_threshold,
            early_stop_window=self.early_stop_window,
            seed=seed,
        )
        mix_cfg = mixture_config(
            spec.observation_dim,
            spec.action_count,
            beta=self.beta,
            sigma_fraction=self.sigma_fraction,
            q_range=self.q_range,
            q_sigma_fraction=self.q_sigma_fraction,
            q_alpha=self.q_alpha,
            pruning_enabled=self.pruning_enabled,
            v_min=self.v_min,
            sp_min=self.sp_min,
        )
        return QIGMNAgent(agent_cfg, mix_cfg, spec.low, spec.high)


@dataclass
class RunRecord:
    seed: int
    episode: int
    ret: float
    steps: int
    components: int
    ms: float


@dataclass
class SeedResult:
    seed: int
    records: list[RunRecord]
    solve_episode: int | None
    components: int
    frozen: bool
    error: str | None = None
    agent: QIGMNAgent | None = None


def _seeds(seed: int) -> tuple[int, int]:
    agent_ss, env_ss = np.random.SeedSequence(seed).spawn(2)
    return int(agent_ss.generate_state(1)[0]), int(env_ss.generate_state(1)[0])


def run_episode(agent: QIGMNAgent, env: envs.Environment, obs: np.ndarray) -> tuple[float, int]:
    total = 0.0
    while True:
        action = agent.select_action(obs)
        res = env.step(action)
        agent.observe(Transition(obs, action, res.reward, res.observation, res.terminated))
        total += res.reward
        obs = res.observation
        if res.done:
            break
    agent.end_episode(total)
    return total, env.steps


def run_seed(cfg: ExperimentConfig, seed: int) -> SeedResult:
    """Train one agent from scratch; NumericalFailure ends the seed, not the caller."""
    env = cfg.make_env()
    agent_seed, env_seed = _seeds(seed)
    agent = cfg.build_agent(env.spec, agent_seed)
    records: list[RunRecord] = []
    returns: list[float] = []
    solve = None
    error = None
    try:
        for episode in range(cfg.max_episodes):
            obs = env.reset(env_seed if episode == 0 else None)
            t0 = time.perf_counter()
            total, steps = run_episode(agent, env, obs)
            ms = (time.perf_counter() - t0) * 1e3 if cfg.record_wall_time else 0.0
            records.append(RunRecord(seed, episode, total, steps, len(agent.model), ms))
            returns.append(total)
            solve = envs.solved(returns, env.spec.solve_threshold, env.spec.solve_window)
            if solve is not None and cfg.stop_when_solved:
                break
    except NumericalFailure as exc:
        error = f"NumericalFailure at episode {len(records)}: {exc}"
        log.error("seed %d aborted: %s", seed, error)
    return SeedResult(seed, records, solve, len(agent.model), agent.frozen, error, agent)


def records_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([r.episode, repr(r.ret), r.steps, r.components, f"{r.ms:.3f}"])
    return buf.getvalue()


def read_returns(path: str | Path) -> list[float]:
    with open(path, newline="") as fh:
        return [float(row["return"]) for row in csv.DictReader(fh)]


def summarize(cfg: ExperimentConfig, results: Sequence[SeedResult]) -> dict:
    """Solve statistics over all seeds and over successful seeds only."""
    per_seed = [
        {
            "seed": r.seed,
            "solve_episode": r.solve_episode,
            "episodes": len(r.records),
            "final_components": r.components,
            "frozen": r.frozen,
            "error": r.error,
        }
        for r in results
    ]
    ok = [r.solve_episode for r in results if r.solve_episode is not None]
    # Unsolved seeds rank above every solve episode for the all-seed median.
    ranked = sorted((math.inf if r.solve_episode is None else r.solve_episode) for r in results)
    median_all = statistics.median(ranked)
    comps = [r.components for r in results]
    return {
        "env": cfg.env,
        "config_hash": cfg.hash(),
        "solve_threshold": envs.spec_for(cfg.env, **cfg.env_kwargs()).solve_threshold,
        "seeds": per_seed,
        "solved_count": len(ok),
        "seed_count": len(results),
        "solve_median_all": None if math.isinf(median_all) else median_all,
        "solve_mean_successful": statistics.fmean(ok) if ok else None,
        "solve_std_successful": statistics.stdev(ok) if len(ok) > 1 else (0.0 if ok else None),
        "final_components_median": statistics.median(comps),
        "aborted": sum(r.error is not None for r in results),
    }


def run_experiment(cfg: ExperimentConfig, parallel: bool = False) -> dict:
    """Run every seed, write ``seed_<s>.csv``, ``seed_<s>.model`` and ``summary.json``."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if parallel and len(cfg.seeds) > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        results = [run_seed(cfg, s) for s in cfg.seeds]
    meta = {"env": cfg.env, "env_kwargs": cfg.env_kwargs(), "config_hash": cfg.hash()}
    for r in results:
        (out / f"seed_{r.seed}.csv").write_text(records_csv(r.records))
        r.agent.model.save(out / f"seed_{r.seed}.model", meta={**meta, "seed": r.seed, "frozen": r.frozen})
    summary = summarize(cfg, results)
    summary["config"] = cfg.to_dict()
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def load_agent(model_path: str | Path, env_name: str) -> tuple[QIGMNAgent, envs.Environment]:
    """Frozen greedy agent around a saved model, plus a matching environment."""
    model, meta = Mixture.load(model_path)
    kwargs = meta.get("env_kwargs", {}) if meta.get("env") == env_name else {}
    env = envs.make(env_name, **kwargs)
    spec = env.spec
    if model.dim != spec.observation_dim + spec.action_count:
        raise ValueError(
            f"model dimension {model.dim} does not match {env_name} "
            f"({spec.observation_dim} state + {spec.action_count} actions)"
        )
    agent_cfg = AgentConfig(action_count=spec.action_count, epsilon=0.0, q_alpha=0.0)
    agent = QIGMNAgent(agent_cfg, model.config, spec.low, spec.high, model=model)
    agent.freeze()
    return agent, env


def evaluate_agent(agent: QIGMNAgent, env: envs.Environment, episodes: int, seed: int) -> list[float]:
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    agent.rng = np.random.default_rng(seed)
    returns = []
    for i in range(episodes):
        obs = env.reset(seed if i == 0 else None)
        total, _ = run_episode(agent, env, obs)
        returns.append(total)
    return returns


def evaluate(model_path: str | Path, env_name: str, episodes: int, seed: int) -> dict:
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    agent, env = load_agent(model_path, env_name)
    returns = evaluate_agent(agent, env, episodes, seed)
    return {
        "env": env_name,
        "episodes": episodes,
        "mean_return": statistics.fmean(returns),
        "std_return": statistics.stdev(returns) if len(returns) > 1 else 0.0,
    }
