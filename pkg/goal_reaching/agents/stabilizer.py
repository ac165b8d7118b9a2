"""
Lyapunov-like stabilizer on top of the benchmark policy.

A tabular cost critic proposes the greedy (minimum-cost) action. The proposal
is executed only when a critic update at the current state can lower the
stored reference value by at least nu_bar while staying inside the quadratic
value bounds; otherwise the benchmark action is executed. Accepted updates are
capped by a per-rollout budget, so every rollout eventually settles on the
benchmark policy if the critic cannot make progress.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from goal_reaching.agents.benchmark_learner import BenchmarkController, is_empty
from goal_reaching.simulation.environment import (
    ControlDecision,
    Controller,
    GoalReachingEnv,
    RuleMode,
    StepResult,
)
from goal_reaching.simulation.kinematics import Goal, MotionLimits, Outcome
from goal_reaching.simulation.statespace import BinningConfig, DiscreteState
from goal_reaching.utils.utils import setup_logging

logger = setup_logging(__name__)

LEDGER_COLUMNS = [
    "episode",
    "goal_x",
    "goal_y",
    "q_ref0",
    "budget",
    "accepted",
    "fallbacks",
    "knowledge_transfers",
    "steps",
    "outcome",
]


class UpdateResult(Enum):
    ACCEPTED = "accepted"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class StageCostWeights:
    w_d: float = 1.0
    w_e: float = 0.1
    w_u: float = 0.01
    d_scale: float = 35.36

    def __post_init__(self):
        if min(self.w_d, self.w_e, self.w_u) < 0:
            raise ValueError("Stage-cost weights must be non-negative")
        if self.d_scale <= 0:
            raise ValueError(f"d_scale must be positive, got {self.d_scale}")


@dataclass(frozen=True)
class StabilizerParams:
    """
    Refinement and rollout settings of the stabilizer.

    Attributes:
        episodes: Refinement episodes
        alpha_crit: Critic step size
        gamma: Discount of the critic TD target
        nu_bar: Required decrease of the reference value per accepted update
        c_min, c_max: Quadratic lower/upper value-bound constants
        knowledge_transfer: Back up fallback-segment costs into the reference cell
        rule_mode: Policy-rule mode used during refinement and rollouts
    """

    episodes: int = 2000
    alpha_crit: float = 0.1
    gamma: float = 0.95
    nu_bar: float = 0.01
    c_min: float = 0.1
    c_max: float = 500.0
    knowledge_transfer: bool = True
    rule_mode: RuleMode = RuleMode.EVAL

    def __post_init__(self):
        problems = []
        if self.episodes < 0:
            problems.append(f"episodes must be >= 0, got {self.episodes}")
        if not 0.0 < self.alpha_crit <= 1.0:
            problems.append(f"alpha_crit must lie in (0, 1], got {self.alpha_crit}")
        if not 0.0 <= self.gamma <= 1.0:
            problems.append(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.nu_bar <= 0:
            problems.append(f"nu_bar must be > 0, got {self.nu_bar}")
        if not 0.0 < self.c_min < self.c_max:
            problems.append(f"need 0 < C_low < C_up, got {self.c_min}, {self.c_max}")
        if problems:
            raise ValueError("Invalid stabilizer parameters: " + "; ".join(problems))


@dataclass
class CriticState:
    """
    Cost critic table plus the reference memory of the current rollout.

    `phi_norms` holds the embedding norm of every packed state, evaluated at
    its distance and heading bin centers.
    """

    w: np.ndarray
    phi_norms: np.ndarray
    nu_bar: float
    c_min: float
    c_max: float
    alpha_crit: float
    ref_state: int = -1
    ref_action: int = -1
    q_ref: float = math.inf
    q_ref0: float = math.nan
    budget: int = 0
    accepted_count: int = 0
    suspended: bool = False
    q_ref_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.c_min < self.c_max:
            raise ValueError(f"need 0 < c_min < c_max, got {self.c_min}, {self.c_max}")
        if self.nu_bar <= 0:
            raise ValueError(f"nu_bar must be > 0, got {self.nu_bar}")

    def copy(self) -> "CriticState":
        return replace(
            self,
            w=self.w.copy(),
            phi_norms=self.phi_norms,
            q_ref_history=list(self.q_ref_history),
        )

    def bounds(self, s: int) -> Tuple[float, float]:
        return kappa_bounds(float(self.phi_norms[s]), self.c_min, self.c_max)

    def bound_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        squared = self.phi_norms**2
        return self.c_min * squared, self.c_max * squared


def embed(d: float, e: float, weights: StageCostWeights) -> np.ndarray:
    if d < 0:
        raise ValueError(f"Distance must be non-negative, got {d}")
    return np.array([d / weights.d_scale, e / math.pi])


def stage_cost(
    d: float,
    e: float,
    a_v: float,
    a_omega: float,
    weights: StageCostWeights,
    limits: MotionLimits,
) -> float:
    """Quadratic one-step cost in normalized distance, heading error and action."""
    action_term = (a_v / limits.a_v_max) ** 2 + (a_omega / limits.a_omega_max) ** 2
    return (
        weights.w_d * (d / weights.d_scale) ** 2
        + weights.w_e * (e / math.pi) ** 2
        + weights.w_u * action_term
    )


def kappa_bounds(phi_norm: float, c_min: float, c_max: float) -> Tuple[float, float]:
    if phi_norm < 0:
        raise ValueError(f"Embedding norm must be non-negative, got {phi_norm}")
    squared = phi_norm * phi_norm
    return c_min * squared, c_max * squared


def state_phi_norms(binning: BinningConfig, weights: StageCostWeights) -> np.ndarray:
    """Embedding norm per packed state, in row-major packing order."""
    d = binning.bin_centers("d")[:, None] / weights.d_scale
    e = binning.bin_centers("e")[None, :] / math.pi
    norms = np.sqrt(d**2 + e**2)
    expanded = np.broadcast_to(norms[:, :, None, None], binning.shape)
    return np.ascontiguousarray(expanded).reshape(-1)


def init_critic(
    binning: BinningConfig,
    n_actions: int,
    weights: StageCostWeights,
    params: StabilizerParams,
) -> CriticState:
    """Pessimistic critic: every cell starts at the upper bound of its state."""
    phi_norms = state_phi_norms(binning, weights)
    upper = params.c_max * phi_norms**2
    return CriticState(
        w=np.repeat(upper[:, None], n_actions, axis=1),
        phi_norms=phi_norms,
        nu_bar=params.nu_bar,
        c_min=params.c_min,
        c_max=params.c_max,
        alpha_crit=params.alpha_crit,
    )


def update_budget(q_ref0: float, nu_bar: float) -> int:
    """Maximum number of accepted decrease updates starting from q_ref0."""
    if nu_bar <= 0:
        raise ValueError(f"nu_bar must be > 0, got {nu_bar}")
    ratio = max((q_ref0 - nu_bar) / nu_bar, 0.0)
    # absorb division round-off such as 0.99 / 0.01 = 98.99999999999999
    return int(math.floor(ratio + 1e-9))


def propose_action(critic: CriticState, s: int) -> int:
    return int(np.argmin(critic.w[s]))


def begin_rollout(critic: CriticState, s0: int) -> None:
    """Reset the reference memory to the greedy pair of the start state."""
    a0 = propose_action(critic, s0)
    critic.ref_state, critic.ref_action = s0, a0
    critic.q_ref = float(critic.w[s0, a0])
    critic.q_ref0 = critic.q_ref
    critic.budget = update_budget(critic.q_ref0, critic.nu_bar)
    critic.accepted_count = 0
    critic.suspended = False
    critic.q_ref_history = [critic.q_ref]


def _feasible_interval(critic: CriticState, s: int) -> Tuple[float, float]:
    lower, upper = critic.bounds(s)
    return lower, min(upper, critic.q_ref - critic.nu_bar)


def is_feasible(critic: CriticState, s: int) -> bool:
    """Whether an update at state s could be accepted, without changing the critic."""
    if critic.accepted_count >= critic.budget:
        return False
    lower, upper = _feasible_interval(critic, s)
    return lower <= upper


def _accept(critic: CriticState, s: int, a: int, td_target: float) -> UpdateResult:
    if not is_feasible(critic, s):
        return UpdateResult.INFEASIBLE
    lower, upper = _feasible_interval(critic, s)
    current = float(critic.w[s, a])
    candidate = current + critic.alpha_crit * (td_target - current)
    value = min(max(candidate, lower), upper)

    previous = critic.q_ref
    critic.w[s, a] = value
    critic.ref_state, critic.ref_action = s, a
    critic.q_ref = value
    critic.accepted_count += 1
    critic.q_ref_history.append(value)
    if value > previous - critic.nu_bar or critic.accepted_count > critic.budget:
        raise RuntimeError(
            f"Accepted update broke the decrease condition: {previous} -> {value}, "
            f"{critic.accepted_count}/{critic.budget} updates"
        )
    return UpdateResult.ACCEPTED


def constrained_update(
    critic: CriticState, s_t: int, a_star: int, td_target: float
) -> UpdateResult:
    """
    Attempt one critic update at (s_t, a_star).

    The new cell value is the damped TD step clipped into
    [kappa_min, min(kappa_max, q_ref - nu_bar)]. An empty interval or an
    exhausted budget leaves the critic untouched.

    Raises:
        RuntimeError: If the critic is suspended; suspended rollouts re-enter
            through StabilizedController
    """
    if critic.suspended:
        raise RuntimeError("Critic is suspended; route updates through the stabilized step")
    return _accept(critic, s_t, a_star, td_target)


def stabilized_step(
    critic: CriticState,
    benchmark: BenchmarkController,
    s: int,
    td_target: Callable[[int], float],
) -> ControlDecision:
    """
    Pick the critic action when an update at s can be accepted, else fall back.

    `td_target(a)` returns the critic TD target of taking action a at s. A
    fallback suspends the critic until a later state is feasible again.
    """
    a_star = propose_action(critic, s)
    if is_feasible(critic, s):
        _accept(critic, s, a_star, td_target(a_star))
        critic.suspended = False
        return ControlDecision(a_star, fallback=False)
    critic.suspended = True
    return ControlDecision(benchmark.action_for(s), fallback=True)


def knowledge_transfer(
    critic: CriticState,
    segment: Sequence[Tuple[int, int, float]],
    terminal_value: float,
) -> None:
    """
    Write the accumulated cost of a benchmark segment into its first cell.

    The segment starts at the reference pair; the written value is clipped to
    that state's bounds. The reference value and update count are unchanged.
    """
    if not segment:
        return
    s_ref, a_ref, _ = segment[0]
    total = math.fsum(cost for _, _, cost in segment) + terminal_value
    lower, upper = critic.bounds(s_ref)
    critic.w[s_ref, a_ref] = min(max(total, lower), upper)


class StabilizedController(Controller):
    """
    Stabilizer acting on top of a benchmark controller.

    In frozen mode every episode works on a private copy of the critic, so the
    refined critic itself is never modified; otherwise updates accumulate in
    the shared critic across episodes.
    """

    def __init__(
        self,
        critic: CriticState,
        benchmark: BenchmarkController,
        stage_weights: StageCostWeights,
        params: StabilizerParams,
        frozen: bool = True,
        policy_id: str = "stabilizer",
    ):
        self.critic = critic
        self.benchmark = benchmark
        self.stage_weights = stage_weights
        self.params = params
        self.frozen = frozen
        self.policy_id = policy_id

        self.active: Optional[CriticState] = None
        self._segment: List[Tuple[int, int, float]] = []
        self._pending: Optional[Tuple[int, int, float]] = None
        self._fallbacks = 0
        self._transfers = 0
        self._steps = 0
        self.episode_summary: dict = {}

    def begin_episode(self, env: GoalReachingEnv, s: DiscreteState) -> None:
        self.active = self.critic.copy() if self.frozen else self.critic
        begin_rollout(self.active, s.packed)
        self._segment = []
        self._pending = None
        self._fallbacks = 0
        self._transfers = 0
        self._steps = 0

    def _cost(self, env: GoalReachingEnv, applied: Tuple[float, float]) -> float:
        # charged on the action left after the policy rules, at the pre-step features
        return stage_cost(env.d, env.e, applied[0], applied[1], self.stage_weights, env.limits)

    def _flush_segment(self, terminal_value: float) -> None:
        if self.params.knowledge_transfer and len(self._segment) > 1:
            knowledge_transfer(self.active, self._segment, terminal_value)
            self._transfers += 1
        self._segment = []

    def td_target(self, env: GoalReachingEnv, s: int, a: int) -> float:
        """Stage cost plus the discounted greedy critic value of the predicted successor."""
        preview = env.lookahead(a, self.params.rule_mode)
        cost = self._cost(env, preview.applied)
        if preview.outcome is Outcome.GOAL:
            return cost
        s_next = preview.discrete.packed
        return cost + self.params.gamma * float(self.active.w[s_next].min())

    def act(self, env: GoalReachingEnv, s: DiscreteState) -> ControlDecision:
        critic = self.active
        if is_feasible(critic, s.packed):
            # close the fallback segment before the critic cell moves
            self._flush_segment(float(critic.w[s.packed].min()))
        decision = stabilized_step(
            critic,
            self.benchmark,
            s.packed,
            lambda a: self.td_target(env, s.packed, a),
        )
        applied = env.lookahead(decision.action, self.params.rule_mode).applied
        self._pending = (s.packed, decision.action, self._cost(env, applied))
        return decision

    def after_step(
        self,
        env: GoalReachingEnv,
        s: DiscreteState,
        decision: ControlDecision,
        result: StepResult,
    ) -> None:
        self._steps += 1
        if decision.fallback:
            self._fallbacks += 1
            # segments only open behind an executed critic action
            if self._segment:
                self._segment.append(self._pending)
        else:
            self._segment = [self._pending]

    def end_episode(self, env: GoalReachingEnv, outcome: Outcome) -> None:
        if outcome is Outcome.GOAL:
            terminal_value = 0.0
        else:
            terminal_value = float(self.active.w[env.observe().packed].min())
        self._flush_segment(terminal_value)
        self.episode_summary = {
            "goal_x": env.goal.x_g,
            "goal_y": env.goal.y_g,
            "q_ref0": self.active.q_ref0,
            "budget": self.active.budget,
            "accepted": self.active.accepted_count,
            "fallbacks": self._fallbacks,
            "knowledge_transfers": self._transfers,
            "steps": self._steps,
            "outcome": outcome.value,
        }


def refine(
    env: GoalReachingEnv,
    critic: CriticState,
    benchmark: BenchmarkController,
    goals: Sequence[Goal],
    stage_weights: StageCostWeights,
    params: StabilizerParams,
    log_every: int = 100,
) -> pd.DataFrame:
    """
    Refine the critic in place over one episode per goal.

    Returns:
        Per-episode ledger with LEDGER_COLUMNS
    """
    if is_empty(benchmark.q):
        logger.warning(
            "Benchmark table is all zeros; every fallback step will use action 0"
        )

    controller = StabilizedController(
        critic, benchmark, stage_weights, params, frozen=False
    )
    logger.info("=" * 40)
    logger.info(
        f"Refining stabilizer critic: {len(goals)} episodes, nu_bar={params.nu_bar}, "
        f"C_low={params.c_min}, C_up={params.c_max}"
    )
    logger.info("=" * 40)

    rows = []
    for episode, goal in enumerate(goals):
        s = env.reset(goal)
        controller.begin_episode(env, s)
        while True:
            decision = controller.act(env, s)
            result = env.step(decision.action, params.rule_mode)
            controller.after_step(env, s, decision, result)
            if result.outcome.is_terminal:
                break
            s = result.discrete
        controller.end_episode(env, result.outcome)
        rows.append({"episode": episode, **controller.episode_summary})

        if log_every and (episode + 1) % log_every == 0:
            recent = pd.DataFrame(rows[-log_every:])
            logger.info(
                f"Episode {episode + 1}/{len(goals)}: "
                f"success {100.0 * (recent['outcome'] == Outcome.GOAL.value).mean():.1f}%, "
                f"fallback share {recent['fallbacks'].sum() / max(recent['steps'].sum(), 1):.3f}"
            )

    logger.info(f"Refinement finished after {len(goals)} episodes")
    return pd.DataFrame(rows, columns=LEDGER_COLUMNS)
