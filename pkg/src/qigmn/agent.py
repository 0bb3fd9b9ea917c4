"""Q-learning agent whose Q-function is one FIGMN over (state, Q_1..Q_|A|).

Greedy actions come from inferring all Q dimensions given the state. Learning
is deferred: transitions are pushed onto a bounded stack and, when the stack
fills or the episode ends, popped newest-first with one model update each, so
values found near the end of an episode reach earlier states in the same pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gmm import Mixture, MixtureConfig

log = logging.getLogger(__name__)


@dataclass
class AgentConfig:
    """Agent hyperparameters; epsilon and q_alpha decay once per episode."""

    action_count: int
    gamma: float = 0.99
    epsilon: float = 1.0
    epsilon_decay: float = 0.9
    epsilon_min: float = 0.0
    q_alpha: float = 0.1
    q_alpha_decay: float = 0.999
    q_alpha_min: float = 0.01
    replay_size: int = 200
    early_stop_threshold: float | None = None
    early_stop_window: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.action_count < 1:
            raise ValueError("action_count must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.epsilon_min <= self.epsilon <= 1.0:
            raise ValueError("need 0 <= epsilon_min <= epsilon <= 1")
        if self.q_alpha < 0.0 or self.q_alpha_min < 0.0:
            raise ValueError("q_alpha and q_alpha_min must be >= 0")
        if self.replay_size < 1:
            raise ValueError("replay_size must be positive")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool = False


class ReplayStack:
    """Bounded LIFO buffer of transitions."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._items: list[Transition] = []

    def __len__(self) -> int:
        return len(self._items)

    @property
    def full(self) -> bool:
        return len(self._items) >= self.capacity

    def push(self, t: Transition) -> None:
        if self.full:
            raise OverflowError("replay stack is full; flush before pushing")
        self._items.append(t)

    def pop(self) -> Transition:
        return self._items.pop()


def mixture_config(
    state_dim: int,
    action_count: int,
    beta: float = 0.1,
    sigma_fraction: float = 0.3,
    q_range: float = 1.0,
    q_sigma_fraction: float | None = None,
    q_alpha: float = 0.0,
    **kwargs,
) -> MixtureConfig:
    """Mixture settings for states scaled to [0, 1] followed by ``action_count`` Q values."""
    q_frac = sigma_fraction if q_sigma_fraction is None else q_sigma_fraction
    sigma = np.concatenate([
        np.full(state_dim, sigma_fraction**2),
        np.full(action_count, (q_frac * q_range) ** 2),
    ])
    q_dims = tuple(range(state_dim, state_dim + action_count))
    return MixtureConfig(beta=beta, sigma_ini=sigma, q_dims=q_dims, q_alpha=q_alpha, **kwargs)


class QIGMNAgent:
    def __init__(
        self,
        config: AgentConfig,
        mix_config: MixtureConfig,
        state_low: Sequence[float],
        state_high: Sequence[float],
        model: Mixture | None = None,
    ):
        self.config = config
        self.low = np.asarray(state_low, dtype=float)
        self.high = np.asarray(state_high, dtype=float)
        self.state_dim = self.low.size
        self.action_count = config.action_count
        dim = self.state_dim + self.action_count
        if model is None:
            model = Mixture(dim, mix_config)
        elif model.dim != dim:
            raise ValueError(f"model has dimension {model.dim}, agent needs {dim}")
        self.model = model
        self.stack = ReplayStack(config.replay_size)
        self.rng = np.random.default_rng(config.seed)
        self.epsilon = config.epsilon
        self.q_alpha = config.q_alpha
        self.model.config.q_alpha = self.q_alpha
        self.frozen = False
        self.episode_returns: list[float] = []
        self.learn_calls = 0
        self.created = 0
        self._state_mask = np.zeros(dim, dtype=bool)
        self._state_mask[: self.state_dim] = True

    def scale(self, state: np.ndarray) -> np.ndarray:
        s = (np.asarray(state, dtype=float) - self.low) / (self.high - self.low)
        return np.clip(s, 0.0, 1.0)

    def q_values(self, state: np.ndarray) -> np.ndarray:
        """Predicted Q for every action at a raw (unscaled) state; zeros for an empty model."""
        if not len(self.model):
            return np.zeros(self.action_count)
        x = np.zeros(self.model.dim)
        x[: self.state_dim] = self.scale(state)
        return self.model.infer(x, self._state_mask)

    def _argmax(self, q: np.ndarray) -> int:
        best = np.flatnonzero(q == q.max())
        if best.size == 1:
            return int(best[0])
        return int(self.rng.choice(best))

    def select_action(self, state: np.ndarray) -> int:
        if not len(self.model) or self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.action_count))
        return self._argmax(self.q_values(state))

    def observe(self, t: Transition) -> None:
        """Store a transition; learn once the stack is full or the episode hits a terminal."""
        if self.frozen:
            return
        self.stack.push(t)
        if self.stack.full or t.terminal:
            self.flush_learn()

    def target(self, t: Transition) -> float:
        if t.terminal:
            return float(t.reward)
        q_next = self.q_values(t.next_state)
        return float(t.reward + self.config.gamma * q_next.max())

    def flush_learn(self) -> None:
        """Empty the stack newest-first, one model update per transition."""
        while len(self.stack):
            t = self.stack.pop()
            x = np.zeros(self.model.dim)
            known = self._state_mask.copy()
            x[: self.state_dim] = self.scale(t.state)
            q_index = self.state_dim + int(t.action)
            x[q_index] = self.target(t)
            known[q_index] = True
            self.created += bool(self.model.learn(x, known))
            self.learn_calls += 1

    def end_episode(self, episode_return: float) -> None:
        """Flush, record the return, decay schedules and test the early-stop rule."""
        if not self.frozen:
            self.flush_learn()
        self.episode_returns.append(float(episode_return))
        if self.frozen:
            return
        cfg = self.config
        self.epsilon = max(cfg.epsilon_min, self.epsilon * cfg.epsilon_decay)
        if self.q_alpha > 0.0:
            self.q_alpha = max(cfg.q_alpha_min, self.q_alpha * cfg.q_alpha_decay)
        self.model.config.q_alpha = self.q_alpha
        if cfg.early_stop_threshold is not None:
            recent = self.episode_returns[-cfg.early_stop_window:]
            if np.mean(recent) >= cfg.early_stop_threshold:
                self.freeze()

    def freeze(self) -> None:
        """Stop all learning: no exploration, no model updates, no new components."""
        self.stack = ReplayStack(self.config.replay_size)
        self.frozen = True
        self.epsilon = 0.0
        self.q_alpha = 0.0
        self.model.config.q_alpha = 0.0
        log.info("agent frozen after %d episodes", len(self.episode_returns))
