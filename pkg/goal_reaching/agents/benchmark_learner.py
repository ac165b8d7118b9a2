"""
Tabular Q-learning / SARSA trainer for the benchmark goal-reaching policy.

The learner sees the environment only through discrete state labels and
action indices; the angular policy rules are applied inside the environment.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd

from goal_reaching.simulation.environment import (
    ControlDecision,
    Controller,
    GoalReachingEnv,
    RuleMode,
)
from goal_reaching.simulation.kinematics import Outcome, sample_goal
from goal_reaching.simulation.reward import reward_bound
from goal_reaching.simulation.statespace import DiscreteState
from goal_reaching.utils.utils import make_rng, setup_logging

logger = setup_logging(__name__)

TRAINING_LOG_COLUMNS = ["episode", "outcome", "steps", "return", "epsilon"]


class UpdateRule(Enum):
    QLEARNING = "qlearning"
    SARSA = "sarsa"


@dataclass
class QTable:
    """Action values indexed by (packed state, action index)."""

    values: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "QTable":
        return cls(np.zeros((n_states, n_actions), dtype=np.float64))

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    @property
    def n_actions(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    """
    Benchmark training schedule.

    Attributes:
        episodes: Number of training episodes
        alpha: TD learning rate
        gamma: Discount factor
        eps0, eps_final: Exploration rate at the first and last episode
        rule: Q-learning or SARSA target
        seed: Root seed of the training stream
        min_goal_distance: Minimum start-to-goal distance of sampled goals
        log_every: Progress logging interval in episodes
    """

    episodes: int = 30000
    alpha: float = 0.1
    gamma: float = 0.95
    eps0: float = 1.0
    eps_final: float = 1e-3
    rule: UpdateRule = UpdateRule.QLEARNING
    seed: int = 0
    min_goal_distance: float = 0.20
    log_every: int = 1000

    def __post_init__(self):
        problems = []
        if self.episodes < 0:
            problems.append(f"episodes must be >= 0, got {self.episodes}")
        if not 0.0 < self.alpha <= 1.0:
            problems.append(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            problems.append(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 <= self.eps_final <= self.eps0 <= 1.0:
            problems.append(
                f"need 0 <= eps_final <= eps0 <= 1, got [{self.eps0}, {self.eps_final}]"
            )
        if problems:
            raise ValueError("Invalid training config: " + "; ".join(problems))


def td_error(
    rule: UpdateRule,
    q: QTable,
    r_t: float,
    s_t: int,
    a_t: int,
    s_next: int,
    a_next: Optional[int],
    gamma: float,
    terminal: bool = False,
) -> float:
    """
    Temporal-difference error of one transition.

    Q-learning bootstraps on max_a' Q(s', a'), SARSA on Q(s', a_next). The
    bootstrap is dropped on terminal transitions.
    """
    if rule is UpdateRule.SARSA and a_next is None and not terminal:
        raise ValueError("SARSA requires the next action for non-terminal transitions")
    if terminal:
        bootstrap = 0.0
    elif rule is UpdateRule.QLEARNING:
        bootstrap = float(q.values[s_next].max())
    else:
        bootstrap = float(q.values[s_next, a_next])
    return r_t + gamma * bootstrap - float(q.values[s_t, a_t])


def update_q(q: QTable, s_t: int, a_t: int, delta: float, alpha: float) -> None:
    q.values[s_t, a_t] += alpha * delta


def select_action(q: QTable, s: int, eps_t: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; np.argmax breaks ties towards the lowest index."""
    if not 0.0 <= eps_t <= 1.0:
        raise ValueError(f"Exploration rate must lie in [0, 1], got {eps_t}")
    if rng.random() < eps_t:
        return int(rng.integers(q.n_actions))
    return int(np.argmax(q.values[s]))


def epsilon_at(episode: int, cfg: TrainConfig) -> float:
    """Geometric interpolation from eps0 at episode 0 to eps_final at the last one."""
    if not 0 <= episode < max(cfg.episodes, 1):
        raise ValueError(f"Episode {episode} outside [0, {cfg.episodes})")
    if cfg.episodes <= 1 or cfg.eps0 == 0.0:
        return cfg.eps0
    fraction = episode / (cfg.episodes - 1)
    return cfg.eps0 * (cfg.eps_final / cfg.eps0) ** fraction


def greedy_policy(q: QTable) -> Callable[[int], int]:
    def policy(s: int) -> int:
        return int(np.argmax(q.values[s]))

    return policy


def train(
    env: GoalReachingEnv,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[QTable, pd.DataFrame]:
    """
    Train the benchmark action-value table.

    Each episode samples a fresh static goal, runs epsilon-greedy actions with
    training-mode policy rules and applies one TD update per step. The next
    action is drawn before the update so both rules follow the same behaviour
    trace under a shared random stream.

    Args:
        env: Environment with training-time integration settings
        cfg: Training schedule
        rng: Random source; defaults to the "train" stream of cfg.seed

    Returns:
        (trained table, per-episode log with TRAINING_LOG_COLUMNS)

    Raises:
        RuntimeError: If any table entry leaves the bound r_max / (1 - gamma)
    """
    rng = rng if rng is not None else make_rng(cfg.seed, "train")
    q = QTable.zeros(env.binning.cardinality, env.n_actions)
    value_bound = reward_bound(env.weights, env.limits) / (1.0 - cfg.gamma)

    logger.info("=" * 40)
    logger.info(
        f"Training benchmark policy: {cfg.episodes} episodes, rule={cfg.rule.value}, "
        f"{q.n_states} states x {q.n_actions} actions"
    )
    logger.info("=" * 40)

    rows = []
    window_successes = 0
    for episode in range(cfg.episodes):
        eps = epsilon_at(episode, cfg)
        goal = sample_goal(env.limits.workspace, env.start, cfg.min_goal_distance, rng)
        s = env.reset(goal).packed
        a = select_action(q, s, eps, rng)
        episode_return = 0.0

        while True:
            result = env.step(a, RuleMode.TRAIN)
            terminal = result.outcome.is_terminal
            s_next = result.discrete.packed
            a_next = None if terminal else select_action(q, s_next, eps, rng)
            delta = td_error(
                cfg.rule, q, result.reward, s, a, s_next, a_next, cfg.gamma, terminal
            )
            update_q(q, s, a, delta, cfg.alpha)
            episode_return += result.reward
            if terminal:
                break
            s, a = s_next, a_next

        rows.append(
            {
                "episode": episode,
                "outcome": result.outcome.value,
                "steps": result.steps,
                "return": episode_return,
                "epsilon": eps,
            }
        )
        window_successes += result.outcome is Outcome.GOAL

        if cfg.log_every and (episode + 1) % cfg.log_every == 0:
            _check_value_bound(q, value_bound)
            logger.info(
                f"Episode {episode + 1}/{cfg.episodes}: eps={eps:.4f}, "
                f"success rate over last {cfg.log_every}: "
                f"{100.0 * window_successes / cfg.log_every:.1f}%"
            )
            window_successes = 0

    _check_value_bound(q, value_bound)
    logger.info(f"Training finished after {cfg.episodes} episodes")
    return q, pd.DataFrame(rows, columns=TRAINING_LOG_COLUMNS)


def _check_value_bound(q: QTable, bound: float) -> None:
    if not np.all(np.isfinite(q.values)):
        raise RuntimeError("Action-value table contains non-finite entries")
    peak = float(np.abs(q.values).max()) if q.values.size else 0.0
    if peak > bound * (1.0 + 1e-9):
        raise RuntimeError(f"Action value {peak:.6g} exceeds bound {bound:.6g}")


class BenchmarkController(Controller):
    """Greedy controller over a trained table; never flags fallback."""

    def __init__(self, q: QTable, policy_id: str = "benchmark"):
        self.q = q
        self.policy_id = policy_id
        self._policy = greedy_policy(q)

    def action_for(self, s: int) -> int:
        return self._policy(s)

    def act(self, env: GoalReachingEnv, s: DiscreteState) -> ControlDecision:
        return ControlDecision(self._policy(s.packed), fallback=False)


def is_empty(q: QTable) -> bool:
    return not np.any(q.values)


def success_rate(log: pd.DataFrame) -> float:
    """Share of Goal outcomes in a training log, in percent."""
    if log.empty:
        return math.nan
    return 100.0 * float((log["outcome"] == Outcome.GOAL.value).mean())
