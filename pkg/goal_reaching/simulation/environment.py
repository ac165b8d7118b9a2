"""
Closed-loop goal-reaching environment shared by training, refinement and evaluation.

The environment owns the continuous robot state and the current goal, applies
the policy-level angular rules to every proposed action, integrates the
kinematics, evaluates termination and computes the shaped reward. Controllers
interact with it through the `Controller` interface.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from goal_reaching.simulation.kinematics import (
    Goal,
    MotionLimits,
    Outcome,
    RobotState,
    advance_goal,
    check_termination,
    goal_features,
    step,
)
from goal_reaching.simulation.reward import RewardWeights, Transition, reward_terms
from goal_reaching.simulation.statespace import (
    ActionGrid,
    BinningConfig,
    DiscreteState,
    quantize,
)
from goal_reaching.utils.utils import setup_logging

logger = setup_logging(__name__)


class RuleMode(Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class RuleParams:
    """Deadbands and zero-lock region of the angular policy rules."""

    e_db: float = 0.01
    omega_db: float = 0.001
    e_lock: float = 0.03
    d_lock: float = 0.30


def apply_policy_rules(
    state: RobotState,
    d: float,
    e: float,
    proposed: Tuple[float, float],
    mode: RuleMode,
    limits: MotionLimits,
    rules: RuleParams,
) -> Tuple[Tuple[float, float], bool]:
    """
    Override the angular part of a proposed action near alignment and the goal.

    Inside the lock region (|e| <= e_lock and d <= d_lock) training brakes omega
    with the saturated acceleration that nulls it in one policy step, while
    evaluation asks the integrator to hold omega at zero. Outside it, the
    hysteresis deadband zeroes a_omega when both |e| and |omega| are tiny.

    Returns:
        ((a_v, a_omega) to apply, clamp_omega directive)
    """
    a_v, a_omega = proposed
    if abs(e) <= rules.e_lock and d <= rules.d_lock:
        if mode is RuleMode.EVAL:
            return (a_v, 0.0), True
        braking = -state.omega / limits.dt_policy
        return (a_v, min(max(braking, limits.a_omega_min), limits.a_omega_max)), False
    if abs(e) < rules.e_db and abs(state.omega) < rules.omega_db:
        return (a_v, 0.0), False
    return (a_v, a_omega), False


@dataclass(frozen=True)
class StepResult:
    """Post-step observation; `terms` holds the fifteen reward components."""

    state: RobotState
    goal: Goal
    d: float
    e: float
    discrete: DiscreteState
    applied: Tuple[float, float]
    clamp_omega: bool
    outcome: Outcome
    reward: float
    terms: np.ndarray
    steps: int


@dataclass(frozen=True)
class Lookahead:
    """Predicted successor of one action under the deterministic transition map."""

    discrete: DiscreteState
    d: float
    e: float
    outcome: Outcome
    applied: Tuple[float, float]


@dataclass(frozen=True)
class ControlDecision:
    action: int
    fallback: bool = False


class Controller:
    """
    Base class for anything that drives the environment.

    Subclasses implement `act`; the remaining hooks are optional.
    """

    policy_id = "controller"

    def begin_episode(self, env: "GoalReachingEnv", s: DiscreteState) -> None:
        pass

    def act(self, env: "GoalReachingEnv", s: DiscreteState) -> ControlDecision:
        raise NotImplementedError

    def after_step(
        self,
        env: "GoalReachingEnv",
        s: DiscreteState,
        decision: ControlDecision,
        result: StepResult,
    ) -> None:
        pass

    def end_episode(self, env: "GoalReachingEnv", outcome: Outcome) -> None:
        pass


class GoalReachingEnv:
    """
    Unicycle goal-reaching task on a discretized state space.

    Args:
        limits: Motion limits and integration timing
        binning: State discretization
        grid: Acceleration action grid
        weights: Reward gains
        rules: Angular policy-rule thresholds
        max_steps: Policy steps before timeout
        goal_tolerance: Capture radius in metres
        start: Default start state for `reset`
        heading_noise: Heading random-walk bound of moving goals (rad per step)
    """

    def __init__(
        self,
        limits: MotionLimits,
        binning: BinningConfig,
        grid: ActionGrid,
        weights: RewardWeights,
        rules: RuleParams,
        max_steps: int,
        goal_tolerance: float,
        start: RobotState,
        heading_noise: float = 0.2,
    ):
        if max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {max_steps}")
        self.limits = limits
        self.binning = binning
        self.grid = grid
        self.weights = weights
        self.rules = rules
        self.max_steps = int(max_steps)
        self.goal_tolerance = float(goal_tolerance)
        self.start = start
        self.heading_noise = heading_noise

        self.state: Optional[RobotState] = None
        self.goal: Optional[Goal] = None
        self.steps = 0
        self.d = 0.0
        self.e = 0.0
        self.e_0_sign = 0.0
        self.outcome = Outcome.RUNNING
        self._goal_rng: Optional[np.random.Generator] = None

    @property
    def n_actions(self) -> int:
        return self.grid.n_actions

    def reset(
        self,
        goal: Goal,
        start: Optional[RobotState] = None,
        goal_rng: Optional[np.random.Generator] = None,
    ) -> DiscreteState:
        """Start an episode towards `goal`; moving goals need `goal_rng`."""
        if goal.speed > 0.0 and goal_rng is None:
            raise ValueError("A moving goal requires a random source")
        self.state = start or self.start
        self.goal = goal
        self._goal_rng = goal_rng
        self.steps = 0
        self.outcome = Outcome.RUNNING
        self.d, self.e = goal_features(self.state, goal, self.goal_tolerance)
        self.e_0_sign = float(np.sign(self.e))
        return self.observe()

    def observe(self) -> DiscreteState:
        return quantize(self.d, self.e, self.state.v, self.state.omega, self.binning)

    def _integrate(
        self, action_index: int, mode: RuleMode
    ) -> Tuple[RobotState, Tuple[float, float], bool]:
        proposed = self.grid.action(action_index)
        applied, clamp = apply_policy_rules(
            self.state, self.d, self.e, proposed, mode, self.limits, self.rules
        )
        return step(self.state, applied, self.limits, clamp_omega=clamp), applied, clamp

    def lookahead(self, action_index: int, mode: RuleMode) -> Lookahead:
        """Predict the next discrete state for an action without touching the episode."""
        next_state, applied, _ = self._integrate(action_index, mode)
        d, e = goal_features(next_state, self.goal, self.goal_tolerance)
        outcome = check_termination(
            next_state,
            self.goal,
            self.steps + 1,
            self.max_steps,
            self.goal_tolerance,
            self.limits.workspace,
        )
        discrete = quantize(d, e, next_state.v, next_state.omega, self.binning)
        return Lookahead(discrete, d, e, outcome, applied)

    def step(self, action_index: int, mode: RuleMode) -> StepResult:
        if self.outcome.is_terminal:
            raise RuntimeError(f"Episode already ended with {self.outcome.value}")

        omega_t = self.state.omega
        next_state, applied, clamp = self._integrate(action_index, mode)
        if self._goal_rng is not None:
            self.goal = advance_goal(
                self.goal,
                self.limits.dt_policy,
                self._goal_rng,
                self.limits.workspace,
                self.heading_noise,
            )

        self.steps += 1
        d_next, e_next = goal_features(next_state, self.goal, self.goal_tolerance)
        outcome = check_termination(
            next_state,
            self.goal,
            self.steps,
            self.max_steps,
            self.goal_tolerance,
            self.limits.workspace,
        )
        transition = Transition(
            d_t=self.d,
            d_next=d_next,
            e_t=self.e,
            e_next=e_next,
            v_next=next_state.v,
            omega_t=omega_t,
            omega_next=next_state.omega,
            a_v=applied[0],
            a_omega=applied[1],
            outcome=outcome,
            d_T=d_next if outcome is Outcome.TIMEOUT else 0.0,
            e_0_sign=self.e_0_sign,
        )
        terms = reward_terms(transition, self.weights)

        self.state, self.d, self.e, self.outcome = next_state, d_next, e_next, outcome
        return StepResult(
            state=next_state,
            goal=self.goal,
            d=d_next,
            e=e_next,
            discrete=self.observe(),
            applied=applied,
            clamp_omega=clamp,
            outcome=outcome,
            reward=float(terms.sum()),
            terms=terms,
            steps=self.steps,
        )

    def continue_towards(
        self, goal: Goal, goal_rng: Optional[np.random.Generator] = None
    ) -> DiscreteState:
        """Start a new segment from the current robot state, keeping its velocities."""
        return self.reset(goal, start=self.state, goal_rng=goal_rng)
