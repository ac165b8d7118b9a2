"""
Rollout harness for matched-goal comparisons of goal-reaching controllers.
"""

import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from goal_reaching.agents.benchmark_learner import BenchmarkController
from goal_reaching.agents.stabilizer import (
    CriticState,
    StabilizedController,
    StabilizerParams,
    StageCostWeights,
)
from goal_reaching.evaluation.statistics import TRAJECTORY_COLUMNS, control_effort
from goal_reaching.simulation.environment import Controller, GoalReachingEnv, RuleMode
from goal_reaching.simulation.kinematics import (
    Goal,
    Outcome,
    RobotState,
    Workspace,
    sample_goal,
)
from goal_reaching.utils.utils import setup_logging

logger = setup_logging(__name__)


@dataclass
class EpisodeRecord:
    """
    One rollout of one controller.

    The trajectory has one row per policy step plus a final row with zero
    action, columns as in TRAJECTORY_COLUMNS. `rewards` holds the fifteen
    reward terms per step when requested.
    """

    goal: Goal
    policy_id: str
    outcome: Outcome
    steps: int
    final_distance: float
    fallback_count: int
    trajectory: np.ndarray
    effort: float
    rewards: Optional[np.ndarray] = None
    segment: int = 0

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.GOAL

    def trajectory_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.trajectory, columns=TRAJECTORY_COLUMNS)


def sample_goals(
    n: int,
    workspace: Workspace,
    min_dist: float,
    rng: np.random.Generator,
    start: Optional[RobotState] = None,
) -> List[Goal]:
    if n < 1:
        raise ValueError(f"Need at least one goal, got n={n}")
    start = start or RobotState(0.0, 0.0, 0.0, 0.0, 0.0)
    return [sample_goal(workspace, start, min_dist, rng) for _ in range(n)]


def goal_list_hash(goals: Sequence[Goal]) -> str:
    payload = json.dumps([list(goal.as_tuple()) for goal in goals])
    return hashlib.sha256(payload.encode()).hexdigest()


def _sample_row(env: GoalReachingEnv, t: float, action, fallback: bool) -> List[float]:
    state = env.state
    return [
        t,
        state.x,
        state.y,
        state.theta,
        state.v,
        state.omega,
        action[0],
        action[1],
        env.d,
        env.e,
        float(fallback),
        env.goal.x_g,
        env.goal.y_g,
    ]


def run_episode(
    env: GoalReachingEnv,
    controller: Controller,
    goal: Goal,
    mode: RuleMode = RuleMode.EVAL,
    start: Optional[RobotState] = None,
    goal_rng: Optional[np.random.Generator] = None,
    record_rewards: bool = False,
    continue_from_current: bool = False,
) -> EpisodeRecord:
    """
    Run one greedy episode and capture the per-step trajectory.

    With `continue_from_current` the robot keeps its pose and velocities from
    the previous episode instead of starting at `start`.
    """
    if continue_from_current:
        s = env.continue_towards(goal, goal_rng)
    else:
        s = env.reset(goal, start=start, goal_rng=goal_rng)
    controller.begin_episode(env, s)

    dt = env.limits.dt_policy
    rows = []
    rewards = []
    fallback_count = 0
    while True:
        decision = controller.act(env, s)
        pre_state_row = _sample_row(env, env.steps * dt, (0.0, 0.0), decision.fallback)
        result = env.step(decision.action, mode)
        pre_state_row[6:8] = result.applied
        rows.append(pre_state_row)
        if record_rewards:
            rewards.append(result.terms)
        fallback_count += decision.fallback
        controller.after_step(env, s, decision, result)
        if result.outcome.is_terminal:
            break
        s = result.discrete
    controller.end_episode(env, result.outcome)
    rows.append(_sample_row(env, env.steps * dt, (0.0, 0.0), False))

    trajectory = np.asarray(rows, dtype=float)
    return EpisodeRecord(
        goal=goal,
        policy_id=controller.policy_id,
        outcome=result.outcome,
        steps=result.steps,
        final_distance=result.d,
        fallback_count=int(fallback_count),
        trajectory=trajectory,
        effort=control_effort(trajectory, env.limits),
        rewards=np.vstack(rewards) if record_rewards else None,
    )


def run_matched(
    goals: Sequence[Goal],
    controllers: Sequence[Controller],
    env: GoalReachingEnv,
    mode: RuleMode = RuleMode.EVAL,
    record_rewards: bool = False,
) -> Dict[str, List[EpisodeRecord]]:
    """
    Evaluate every controller on the same goal list from the standard start.

    Raises:
        RuntimeError: If the goal list changes between controllers
    """
    goals = list(goals)
    expected = goal_list_hash(goals)
    logger.info(
        f"Matched evaluation: {len(goals)} goals x {len(controllers)} policies "
        f"(goal list {expected[:12]})"
    )

    results: Dict[str, List[EpisodeRecord]] = {}
    for controller in controllers:
        if goal_list_hash(goals) != expected:
            raise RuntimeError("Goal list changed during matched evaluation")
        records = [
            run_episode(env, controller, goal, mode, record_rewards=record_rewards)
            for goal in goals
        ]
        successes = sum(record.success for record in records)
        logger.info(
            f"  {controller.policy_id}: {successes}/{len(records)} goals reached"
        )
        results[controller.policy_id] = records
    return results


def run_moving_goal_sequence(
    controller: Controller,
    n_goals: int,
    env: GoalReachingEnv,
    rng: np.random.Generator,
    speed_fraction: float = 0.5,
    min_dist: float = 0.20,
    mode: RuleMode = RuleMode.EVAL,
    record_rewards: bool = False,
) -> List[EpisodeRecord]:
    """
    Chase `n_goals` drifting goals one after another without resetting the robot.

    Each goal starts uniformly in the workspace with a random heading and speed
    speed_fraction * v_max. A segment ends on capture or timeout; leaving the
    workspace ends the whole sequence.
    """
    if n_goals < 1:
        raise ValueError(f"Need at least one goal, got n_goals={n_goals}")
    speed = speed_fraction * env.limits.v_max

    records: List[EpisodeRecord] = []
    robot = env.start
    for segment in range(n_goals):
        anchor = sample_goal(env.limits.workspace, robot, min_dist, rng)
        heading = float(rng.uniform(-math.pi, math.pi))
        goal = Goal.moving(anchor.x_g, anchor.y_g, speed, heading, env.limits)
        record = run_episode(
            env,
            controller,
            goal,
            mode,
            goal_rng=rng,
            record_rewards=record_rewards,
            continue_from_current=segment > 0,
        )
        records.append(replace(record, segment=segment))
        robot = env.state
        if record.outcome is Outcome.OUT_OF_BOUNDS:
            logger.warning(
                f"{controller.policy_id} left the workspace in segment {segment}; "
                "stopping the sequence"
            )
            break
    return records


def run_nu_sweep(
    goals: Sequence[Goal],
    benchmark: BenchmarkController,
    critic: CriticState,
    nu_values: Sequence[float],
    env: GoalReachingEnv,
    stage_weights: StageCostWeights,
    params: StabilizerParams,
) -> Dict[float, List[EpisodeRecord]]:
    """Roll out the stabilizer on the same goals for several decrease margins."""
    sweep: Dict[float, List[EpisodeRecord]] = {}
    for nu_bar in nu_values:
        tuned_params = replace(params, nu_bar=float(nu_bar))
        tuned_critic = replace(critic.copy(), nu_bar=float(nu_bar))
        controller = StabilizedController(
            tuned_critic,
            benchmark,
            stage_weights,
            tuned_params,
            frozen=True,
            policy_id=f"stabilizer_nu_{nu_bar:g}",
        )
        sweep[float(nu_bar)] = [
            run_episode(env, controller, goal, params.rule_mode) for goal in goals
        ]
        reached = sum(record.success for record in sweep[float(nu_bar)])
        logger.info(f"nu_bar={nu_bar:g}: {reached}/{len(goals)} goals reached")
    return sweep
