import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

import numpy as np

from goal_reaching.utils.utils import setup_logging

logger = setup_logging(__name__)

TWO_PI = 2.0 * math.pi


class Outcome(Enum):
    """Result of evaluating one policy step. Every tag except RUNNING is terminal."""

    RUNNING = "Running"
    GOAL = "Goal"
    TIMEOUT = "Timeout"
    OUT_OF_BOUNDS = "OutOfBounds"

    @property
    def is_terminal(self) -> bool:
        return self is not Outcome.RUNNING


class GoalMode(Enum):
    STATIC = "static"
    MOVING = "moving"


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned rectangular operating area in metres."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"Workspace bounds must satisfy min < max, got "
                f"x=[{self.x_min}, {self.x_max}], y=[{self.y_min}, {self.y_max}]"
            )

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x_max - self.x_min, self.y_max - self.y_min)

    def max_distance_from(self, x: float, y: float) -> float:
        """Distance from (x, y) to the farthest workspace corner."""
        return max(
            math.hypot(cx - x, cy - y)
            for cx in (self.x_min, self.x_max)
            for cy in (self.y_min, self.y_max)
        )


@dataclass(frozen=True)
class MotionLimits:
    """
    Velocity and acceleration bounds of the unicycle plus integration timing.

    Attributes:
        v_min, v_max: Linear speed bounds (m/s)
        omega_min, omega_max: Angular speed bounds (rad/s)
        a_v_min, a_v_max: Linear acceleration bounds (m/s^2)
        a_omega_min, a_omega_max: Angular acceleration bounds (rad/s^2)
        workspace: Rectangular operating area
        dt_policy: Interval over which one action is held (s)
        dt_sim: Euler integration increment (s); dt_policy must be a multiple of it
    """

    v_min: float
    v_max: float
    omega_min: float
    omega_max: float
    a_v_min: float
    a_v_max: float
    a_omega_min: float
    a_omega_max: float
    workspace: Workspace
    dt_policy: float
    dt_sim: float

    def __post_init__(self):
        problems = []
        if self.v_min > self.v_max:
            problems.append(f"v_min {self.v_min} > v_max {self.v_max}")
        if self.omega_min > self.omega_max:
            problems.append(f"omega_min {self.omega_min} > omega_max {self.omega_max}")
        if self.a_v_min > self.a_v_max:
            problems.append(f"a_v_min {self.a_v_min} > a_v_max {self.a_v_max}")
        if self.a_omega_min > self.a_omega_max:
            problems.append(
                f"a_omega_min {self.a_omega_min} > a_omega_max {self.a_omega_max}"
            )
        if self.dt_sim <= 0 or self.dt_policy <= 0:
            problems.append("dt_policy and dt_sim must be positive")
        else:
            ratio = self.dt_policy / self.dt_sim
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                problems.append(
                    f"dt_policy {self.dt_policy} is not an integer multiple of dt_sim {self.dt_sim}"
                )
        if problems:
            raise ValueError("Invalid motion limits: " + "; ".join(problems))

    @property
    def n_substeps(self) -> int:
        return int(round(self.dt_policy / self.dt_sim))

    def with_timing(self, dt_policy: float, dt_sim: float) -> "MotionLimits":
        return replace(self, dt_policy=dt_policy, dt_sim=dt_sim)


@dataclass(frozen=True)
class RobotState:
    """Continuous pose and velocities of the unicycle."""

    x: float
    y: float
    theta: float
    v: float
    omega: float

    def as_tuple(self) -> Tuple[float, float, float, float, float]:
        return (self.x, self.y, self.theta, self.v, self.omega)


@dataclass(frozen=True)
class Goal:
    """
    Target point, optionally drifting with a random-walk heading.

    Speed and heading are only meaningful in moving mode.
    """

    x_g: float
    y_g: float
    mode: GoalMode = GoalMode.STATIC
    speed: float = 0.0
    heading: float = 0.0

    @classmethod
    def moving(
        cls, x_g: float, y_g: float, speed: float, heading: float, limits: MotionLimits
    ) -> "Goal":
        if not 0.0 <= speed < limits.v_max:
            raise ValueError(
                f"Moving-goal speed must lie in [0, v_max={limits.v_max}), got {speed}"
            )
        if not limits.workspace.contains(x_g, y_g):
            raise ValueError(f"Goal ({x_g}, {y_g}) lies outside the workspace")
        return cls(x_g, y_g, GoalMode.MOVING, float(speed), wrap_pi(heading))

    def as_tuple(self) -> Tuple[float, float, str, float, float]:
        return (self.x_g, self.y_g, self.mode.value, self.speed, self.heading)


def wrap_pi(angle: float) -> float:
    """Map an angle to the half-open interval [-pi, pi)."""
    if not math.isfinite(angle):
        raise ValueError(f"Cannot wrap non-finite angle {angle}")
    wrapped = angle - TWO_PI * math.floor((angle + math.pi) / TWO_PI)
    # floor rounding can land exactly on +pi
    if wrapped >= math.pi:
        wrapped -= TWO_PI
    return wrapped


def goal_features(
    state: RobotState, goal: Goal, goal_tolerance: float = 0.0
) -> Tuple[float, float]:
    """
    Distance and heading error from the robot to the goal.

    The bearing is undefined at the goal itself, so inside the goal tolerance
    the heading error is reported as zero.

    Returns:
        (d, e) with d in metres and e in [-pi, pi)
    """
    dx = goal.x_g - state.x
    dy = goal.y_g - state.y
    d = math.hypot(dx, dy)
    if d < goal_tolerance or d == 0.0:
        return d, 0.0
    e = wrap_pi(math.atan2(dy, dx) - state.theta)
    return d, e


def step(
    state: RobotState,
    action: Tuple[float, float],
    limits: MotionLimits,
    clamp_omega: bool = False,
) -> RobotState:
    """
    Advance the unicycle by one policy interval.

    The action is held for dt_policy and integrated in dt_sim Euler increments.
    Speeds are saturated after every increment and the position update uses the
    post-update speed with the heading from before the increment. With the
    acceleration held constant the per-increment saturation of a ramp equals
    clipping the ramp, which lets all increments be evaluated at once.

    Args:
        state: Current robot state (speeds within limits)
        action: (a_v, a_omega) accelerations held over the interval
        limits: Motion limits and timing
        clamp_omega: Hard zero-lock directive, keeps omega at 0 for the interval

    Returns:
        Robot state after dt_policy
    """
    a_v, a_omega = action
    h = limits.dt_sim
    ramp = h * np.arange(1, limits.n_substeps + 1)

    v = np.clip(state.v + a_v * ramp, limits.v_min, limits.v_max)
    if clamp_omega:
        omega = np.zeros_like(ramp)
    else:
        omega = np.clip(
            state.omega + a_omega * ramp, limits.omega_min, limits.omega_max
        )

    # heading in effect at the start of each increment
    heading = state.theta + h * np.concatenate(([0.0], np.cumsum(omega[:-1])))
    x = state.x + h * float(np.sum(v * np.cos(heading)))
    y = state.y + h * float(np.sum(v * np.sin(heading)))
    theta = wrap_pi(state.theta + h * float(np.sum(omega)))

    return RobotState(x=x, y=y, theta=theta, v=float(v[-1]), omega=float(omega[-1]))


def check_termination(
    state: RobotState,
    goal: Goal,
    steps_elapsed: int,
    max_steps: int,
    goal_tolerance: float,
    workspace: Workspace,
) -> Outcome:
    """Classify a post-step state. Precedence: Goal > OutOfBounds > Timeout."""
    if steps_elapsed > max_steps:
        raise ValueError(
            f"steps_elapsed {steps_elapsed} exceeds max_steps {max_steps}"
        )
    d, _ = goal_features(state, goal)
    if d <= goal_tolerance:
        return Outcome.GOAL
    if not workspace.contains(state.x, state.y):
        return Outcome.OUT_OF_BOUNDS
    if steps_elapsed == max_steps:
        return Outcome.TIMEOUT
    return Outcome.RUNNING


def sample_goal(
    workspace: Workspace,
    start: RobotState,
    min_dist: float,
    rng: np.random.Generator,
    max_tries: int = 10_000,
) -> Goal:
    """Static goal uniform over the workspace, at least `min_dist` from the start."""
    for _ in range(max_tries):
        x = rng.uniform(workspace.x_min, workspace.x_max)
        y = rng.uniform(workspace.y_min, workspace.y_max)
        if math.hypot(x - start.x, y - start.y) >= min_dist:
            return Goal(float(x), float(y))
    raise ValueError(
        f"No goal at least {min_dist} m from ({start.x}, {start.y}) after {max_tries} draws"
    )


def advance_goal(
    goal: Goal,
    dt: float,
    rng: np.random.Generator,
    workspace: Workspace,
    heading_noise: float = 0.2,
) -> Goal:
    """
    Move a drifting goal by one interval.

    The heading takes a uniform random increment in [-heading_noise, heading_noise],
    the goal travels speed*dt along it, and crossing a workspace edge reflects
    both the position and the heading. Static and zero-speed goals are returned
    unchanged.
    """
    if goal.mode is not GoalMode.MOVING or goal.speed == 0.0:
        return goal

    heading = goal.heading + rng.uniform(-heading_noise, heading_noise)
    x = goal.x_g + goal.speed * dt * math.cos(heading)
    y = goal.y_g + goal.speed * dt * math.sin(heading)

    if x > workspace.x_max:
        x, heading = 2.0 * workspace.x_max - x, math.pi - heading
    elif x < workspace.x_min:
        x, heading = 2.0 * workspace.x_min - x, math.pi - heading
    if y > workspace.y_max:
        y, heading = 2.0 * workspace.y_max - y, -heading
    elif y < workspace.y_min:
        y, heading = 2.0 * workspace.y_min - y, -heading

    return replace(goal, x_g=x, y_g=y, heading=wrap_pi(heading))
