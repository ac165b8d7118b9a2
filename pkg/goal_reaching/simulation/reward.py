"""
Shaped per-step reward for goal reaching.

The reward is the task part (step cost, distance progress, timeout penalty)
plus twelve shaping terms that steer how the goal is approached. The distance
and heading progress terms are potential differences, which
`potential_difference` exposes for auditing.
"""

import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from goal_reaching.simulation.kinematics import MotionLimits, Outcome, Workspace


class ShapingMode(Enum):
    PLAIN = "plain"
    DISCOUNTED = "discounted"


TASK_TERMS = ("r_step", "r_d", "r_timeout")
SHAPING_TERMS = (
    "r_theta",
    "r_omega",
    "r_v_par",
    "r_v_perp",
    "r_a",
    "r_hyst",
    "r_goal",
    "r_flip",
    "r_inc",
    "r_stall",
    "r_stop",
    "r_sign",
)
REWARD_TERMS = TASK_TERMS + SHAPING_TERMS


@dataclass(frozen=True)
class RewardWeights:
    """
    Gains and thresholds of the shaped reward.

    k_ws is fixed at 1.2; every other gain is a tuning default and is
    recorded with each run configuration.
    """

    k_step: float = 0.01
    k_d: float = 1.0
    k_timeout: float = 0.1
    k_theta: float = 1.0
    k_omega: float = 0.5
    k_v: float = 0.5
    k_lat: float = 0.5
    k_a_v: float = 0.1
    k_a_omega: float = 0.1
    k_ws: float = 1.2
    k_wflip: float = 0.5
    k_heading_inc: float = 0.5
    k_heading_stall: float = 0.05
    k_wstop: float = 1.0
    k_wsign: float = 1.0
    w_db: float = 0.001
    e_db: float = 0.01
    d_goalTol: float = 0.10
    e_pad: float = 0.05
    a_omega_B: float = 0.02
    gamma: float = 0.95
    shaping_mode: ShapingMode = ShapingMode.PLAIN

    def __post_init__(self):
        problems = []
        for f in fields(self):
            if f.name.startswith("k_") and getattr(self, f.name) < 0:
                problems.append(f"{f.name} must be >= 0, got {getattr(self, f.name)}")
        for name in ("w_db", "e_db", "a_omega_B"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be > 0, got {getattr(self, name)}")
        if self.d_goalTol < 0 or self.e_pad < 0:
            problems.append("d_goalTol and e_pad must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            problems.append(f"gamma must lie in [0, 1], got {self.gamma}")
        if problems:
            raise ValueError("Invalid reward weights: " + "; ".join(problems))

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["shaping_mode"] = self.shaping_mode.value
        return data


@dataclass(frozen=True)
class Transition:
    """
    One policy step as seen by the reward.

    d_T is the remaining distance when the step ends in a timeout; e_0_sign is
    the sign of the heading error at the start of the episode.
    """

    d_t: float
    d_next: float
    e_t: float
    e_next: float
    v_next: float
    omega_t: float
    omega_next: float
    a_v: float
    a_omega: float
    outcome: Outcome = Outcome.RUNNING
    d_T: float = 0.0
    e_0_sign: float = 0.0


@dataclass(frozen=True)
class ShapingBreakdown:
    r_theta: float
    r_omega: float
    r_v_par: float
    r_v_perp: float
    r_a: float
    r_hyst: float
    r_goal: float
    r_flip: float
    r_inc: float
    r_stall: float
    r_stop: float
    r_sign: float

    def as_tuple(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in SHAPING_TERMS)

    @property
    def total(self) -> float:
        return math.fsum(self.as_tuple())


def _discount(w: RewardWeights) -> float:
    return w.gamma if w.shaping_mode is ShapingMode.DISCOUNTED else 1.0


def _task_terms(tr: Transition, w: RewardWeights) -> Tuple[float, float, float]:
    r_step = -w.k_step
    r_d = w.k_d * (tr.d_t - _discount(w) * tr.d_next)
    r_timeout = -w.k_timeout * tr.d_T if tr.outcome is Outcome.TIMEOUT else 0.0
    return r_step, r_d, r_timeout


def task_reward(tr: Transition, w: RewardWeights) -> float:
    """r_step + r_d + r_timeout; the timeout penalty only applies on Timeout."""
    return math.fsum(_task_terms(tr, w))


def stopping_angle(omega: float, w: RewardWeights) -> float:
    """Heading swept while braking omega to zero at the braking bound."""
    return omega * omega / (2.0 * w.a_omega_B)


def shaping_reward(tr: Transition, w: RewardWeights) -> Tuple[float, ShapingBreakdown]:
    abs_e, abs_e_next = abs(tr.e_t), abs(tr.e_next)
    alignment = 0.5 * (1.0 + math.cos(abs_e_next))
    delta_e = abs_e_next - abs_e

    r_theta = w.k_theta * (abs_e - _discount(w) * abs_e_next)
    r_omega = -w.k_omega * alignment * tr.omega_next**2
    r_v_par = w.k_v * tr.v_next * max(0.0, math.cos(tr.e_next)) ** 2
    r_v_perp = -w.k_lat * tr.v_next**2 * math.sin(tr.e_next) ** 2
    r_a = -w.k_a_v * tr.a_v**2 - w.k_a_omega * (0.5 + 0.5 * alignment) * tr.a_omega**2

    r_hyst = 0.0
    if abs_e_next < w.e_db:
        r_hyst = -w.k_ws * max(0.0, abs(tr.omega_next) - w.w_db) ** 2

    r_goal = w.k_d * tr.d_t if tr.d_next <= w.d_goalTol else 0.0
    r_flip = -w.k_wflip if tr.omega_t * tr.omega_next < 0.0 else 0.0
    r_inc = -w.k_heading_inc * max(0.0, delta_e)

    r_stall = 0.0
    if abs(delta_e) < w.e_db and abs_e_next > w.e_db:
        r_stall = -w.k_heading_stall * abs_e_next

    excess = max(0.0, stopping_angle(tr.omega_next, w) - (abs_e_next + w.e_pad))
    r_stop = -w.k_wstop * excess**2

    wrong = max(0.0, -tr.e_0_sign * tr.omega_next - w.w_db)
    r_sign = -w.k_wsign * wrong**2 if wrong > 0.0 else 0.0

    breakdown = ShapingBreakdown(
        r_theta=r_theta,
        r_omega=r_omega,
        r_v_par=r_v_par,
        r_v_perp=r_v_perp,
        r_a=r_a,
        r_hyst=r_hyst,
        r_goal=r_goal,
        r_flip=r_flip,
        r_inc=r_inc,
        r_stall=r_stall,
        r_stop=r_stop,
        r_sign=r_sign,
    )
    return breakdown.total, breakdown


def reward_terms(tr: Transition, w: RewardWeights) -> np.ndarray:
    """All fifteen per-step terms in REWARD_TERMS order."""
    _, breakdown = shaping_reward(tr, w)
    return np.array(_task_terms(tr, w) + breakdown.as_tuple(), dtype=float)


def total_reward(tr: Transition, w: RewardWeights) -> float:
    return task_reward(tr, w) + shaping_reward(tr, w)[0]


def potential(d: float, e: float, w: RewardWeights) -> float:
    if d < 0:
        raise ValueError(f"Distance must be non-negative, got {d}")
    return w.k_d * d + w.k_theta * abs(e)


def potential_difference(tr: Transition, w: RewardWeights) -> float:
    """Phi(s_t) - Phi(s_t+1), discounted by gamma in discounted shaping mode."""
    return potential(tr.d_t, tr.e_t, w) - _discount(w) * potential(
        tr.d_next, tr.e_next, w
    )


def reward_bound(
    w: RewardWeights, limits: MotionLimits, workspace: Optional[Workspace] = None
) -> float:
    """
    Upper bound on |r_t| summed from the per-term maxima.

    Distances are capped by the workspace diagonal and per-step progress by the
    distance covered at full speed in one policy interval.
    """
    workspace = workspace or limits.workspace
    diagonal = workspace.diagonal
    v_abs = max(abs(limits.v_min), abs(limits.v_max))
    omega_abs = max(abs(limits.omega_min), abs(limits.omega_max))
    a_v_abs = max(abs(limits.a_v_min), abs(limits.a_v_max))
    a_omega_abs = max(abs(limits.a_omega_min), abs(limits.a_omega_max))
    progress = v_abs * limits.dt_policy
    if w.shaping_mode is ShapingMode.DISCOUNTED:
        progress = diagonal

    maxima = (
        w.k_step,
        w.k_d * progress,
        w.k_timeout * diagonal,
        w.k_theta * math.pi,
        w.k_omega * omega_abs**2,
        w.k_v * v_abs,
        w.k_lat * v_abs**2,
        w.k_a_v * a_v_abs**2 + w.k_a_omega * a_omega_abs**2,
        w.k_ws * omega_abs**2,
        w.k_d * diagonal,
        w.k_wflip,
        w.k_heading_inc * math.pi,
        w.k_heading_stall * math.pi,
        w.k_wstop * stopping_angle(omega_abs, w) ** 2,
        w.k_wsign * omega_abs**2,
    )
    return math.fsum(maxima)
