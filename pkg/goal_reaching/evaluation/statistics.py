"""
Aggregate statistics, control effort and paired tests over evaluation records.
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from goal_reaching.simulation.kinematics import MotionLimits, Outcome
from goal_reaching.utils.utils import setup_logging

logger = setup_logging(__name__)

TRAJECTORY_COLUMNS = [
    "t",
    "x",
    "y",
    "theta",
    "v",
    "omega",
    "a_v",
    "a_omega",
    "d",
    "e",
    "fallback",
    "goal_x",
    "goal_y",
]
_V = TRAJECTORY_COLUMNS.index("v")
_OMEGA = TRAJECTORY_COLUMNS.index("omega")

NOT_APPLICABLE = "n/a"

# Row labels of the comparison table, in display order
STAT_LABELS = {
    "success_pct": "Success rate (%)",
    "goal_pct": "Goal end (%)",
    "timeout_pct": "Timeout end (%)",
    "oob_pct": "Out of bounds end (%)",
    "steps_median": "Steps (all eps), median",
    "steps_mean": "Steps (all eps), mean",
    "steps_success_median": "Steps, median (success)",
    "steps_success_mean": "Steps, mean (success)",
    "final_distance_median": "Final dis, median (all)",
    "final_distance_mean": "Final dis, mean (all)",
    "final_distance_fail_median": "Final dis, median (fail)",
    "final_distance_fail_mean": "Final dis, mean (fail)",
    "fallbacks_median": "Fallbacks, median",
    "fallbacks_mean": "Fallbacks, mean",
    "fallback_ratio_mean": "Fallbacks/steps, mean",
}


@dataclass(frozen=True)
class AggregateStats:
    """Comparison-table statistics of one policy; None marks a statistic with no samples."""

    n_episodes: int
    success_pct: float
    goal_pct: float
    timeout_pct: float
    oob_pct: float
    steps_median: float
    steps_mean: float
    steps_success_median: Optional[float]
    steps_success_mean: Optional[float]
    final_distance_median: float
    final_distance_mean: float
    final_distance_fail_median: Optional[float]
    final_distance_fail_mean: Optional[float]
    fallbacks_median: float
    fallbacks_mean: float
    fallback_ratio_mean: float

    def to_dict(self) -> Dict:
        return asdict(self)


def lower_median(values: Sequence[float]) -> Optional[float]:
    """Median taking the lower middle element for even counts."""
    if len(values) == 0:
        return None
    ordered = sorted(values)
    return float(ordered[(len(ordered) - 1) // 2])


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


def aggregate(records: Sequence) -> AggregateStats:
    """
    Reduce episode records of one policy to comparison-table statistics.

    Raises:
        ValueError: If `records` is empty
    """
    if len(records) == 0:
        raise ValueError("Cannot aggregate an empty record list")

    n = len(records)
    outcomes = [record.outcome for record in records]
    steps = [record.steps for record in records]
    distances = [record.final_distance for record in records]
    fallbacks = [record.fallback_count for record in records]
    success_steps = [r.steps for r in records if r.outcome is Outcome.GOAL]
    fail_distances = [r.final_distance for r in records if r.outcome is not Outcome.GOAL]
    ratios = [r.fallback_count / r.steps if r.steps else 0.0 for r in records]

    def pct(outcome: Outcome) -> float:
        return 100.0 * outcomes.count(outcome) / n

    return AggregateStats(
        n_episodes=n,
        success_pct=pct(Outcome.GOAL),
        goal_pct=pct(Outcome.GOAL),
        timeout_pct=pct(Outcome.TIMEOUT),
        oob_pct=pct(Outcome.OUT_OF_BOUNDS),
        steps_median=lower_median(steps),
        steps_mean=_mean(steps),
        steps_success_median=lower_median(success_steps),
        steps_success_mean=_mean(success_steps),
        final_distance_median=lower_median(distances),
        final_distance_mean=_mean(distances),
        final_distance_fail_median=lower_median(fail_distances),
        final_distance_fail_mean=_mean(fail_distances),
        fallbacks_median=lower_median(fallbacks),
        fallbacks_mean=_mean(fallbacks),
        fallback_ratio_mean=_mean(ratios),
    )


def stats_frame(stats_by_policy: Dict[str, AggregateStats]) -> pd.DataFrame:
    """Comparison table with one row per statistic and one column per policy."""
    table = {"Metric": list(STAT_LABELS.values())}
    for policy_id, agg in stats_by_policy.items():
        values = agg.to_dict()
        table[policy_id] = [
            NOT_APPLICABLE if values[key] is None else values[key] for key in STAT_LABELS
        ]
    return pd.DataFrame(table)


def effort_weight(limits: MotionLimits) -> float:
    """Angular weight lambda = (v_max / omega_max)^2 of the effort integral."""
    return (limits.v_max / limits.omega_max) ** 2


def control_effort(trajectory: np.ndarray, limits: MotionLimits) -> float:
    """
    Command-energy proxy: trapezoidal integral of v^2 + lambda * omega^2.

    The trajectory is sampled every dt_policy with columns as in TRAJECTORY_COLUMNS.
    """
    trajectory = np.asarray(trajectory, dtype=float)
    if trajectory.ndim != 2 or trajectory.shape[0] < 2:
        raise ValueError("Control effort needs at least two trajectory samples")
    v = trajectory[:, _V]
    omega = trajectory[:, _OMEGA]
    integrand = v**2 + effort_weight(limits) * omega**2
    return float(np.trapezoid(integrand, dx=limits.dt_policy))


@dataclass(frozen=True)
class PairedComparison:
    """
    Paired comparison of a candidate policy against a baseline on matched goals.

    p_candidate_better is the exact one-sided McNemar p-value for the candidate
    succeeding more often; p_baseline_better tests the opposite direction.
    """

    baseline: str
    candidate: str
    n_pairs: int
    baseline_success: int
    candidate_success: int
    baseline_only: int
    candidate_only: int
    p_candidate_better: float
    p_baseline_better: float
    mutual_successes: int
    baseline_steps_mean: float
    candidate_steps_mean: float
    p_fewer_steps: float
    baseline_effort_mean: float
    candidate_effort_mean: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(self)])


def paired_comparison(baseline: Sequence, candidate: Sequence) -> PairedComparison:
    """
    Compare two record lists produced on the same goal sequence.

    Raises:
        ValueError: If the lists differ in length or goals
    """
    if len(baseline) != len(candidate):
        raise ValueError(
            f"Paired comparison needs equal lengths, got {len(baseline)} and {len(candidate)}"
        )
    if any(b.goal != c.goal for b, c in zip(baseline, candidate)):
        raise ValueError("Paired records were produced on different goals")

    base_ok = np.array([r.outcome is Outcome.GOAL for r in baseline], dtype=bool)
    cand_ok = np.array([r.outcome is Outcome.GOAL for r in candidate], dtype=bool)
    baseline_only = int(np.sum(base_ok & ~cand_ok))
    candidate_only = int(np.sum(~base_ok & cand_ok))
    discordant = baseline_only + candidate_only

    if discordant:
        p_candidate = stats.binomtest(candidate_only, discordant, 0.5, alternative="greater").pvalue
        p_baseline = stats.binomtest(baseline_only, discordant, 0.5, alternative="greater").pvalue
    else:
        p_candidate = p_baseline = 1.0

    mutual = base_ok & cand_ok
    base_steps = np.array([r.steps for r in baseline], dtype=float)[mutual]
    cand_steps = np.array([r.steps for r in candidate], dtype=float)[mutual]
    base_effort = np.array([r.effort for r in baseline], dtype=float)[mutual]
    cand_effort = np.array([r.effort for r in candidate], dtype=float)[mutual]

    differences = base_steps - cand_steps
    if differences.size and np.any(differences != 0):
        p_steps = float(stats.wilcoxon(differences, alternative="greater").pvalue)
    else:
        p_steps = math.nan

    return PairedComparison(
        baseline=baseline[0].policy_id if len(baseline) else "",
        candidate=candidate[0].policy_id if len(candidate) else "",
        n_pairs=len(baseline),
        baseline_success=int(base_ok.sum()),
        candidate_success=int(cand_ok.sum()),
        baseline_only=baseline_only,
        candidate_only=candidate_only,
        p_candidate_better=float(p_candidate),
        p_baseline_better=float(p_baseline),
        mutual_successes=int(mutual.sum()),
        baseline_steps_mean=float(base_steps.mean()) if base_steps.size else math.nan,
        candidate_steps_mean=float(cand_steps.mean()) if cand_steps.size else math.nan,
        p_fewer_steps=p_steps,
        baseline_effort_mean=float(base_effort.mean()) if base_effort.size else math.nan,
        candidate_effort_mean=float(cand_effort.mean()) if cand_effort.size else math.nan,
    )


def reaching_summary(records: Sequence, dt_policy: float) -> Dict:
    """Final distance error (cm), reaching time (s) and effort averaged over successes."""
    reached = [r for r in records if r.outcome is Outcome.GOAL]
    if not reached:
        return {
            "policy": records[0].policy_id if records else "",
            "successes": 0,
            "distance_error_cm": NOT_APPLICABLE,
            "reaching_time_s": NOT_APPLICABLE,
            "control_effort": NOT_APPLICABLE,
        }
    return {
        "policy": reached[0].policy_id,
        "successes": len(reached),
        "distance_error_cm": 100.0 * float(np.mean([r.final_distance for r in reached])),
        "reaching_time_s": dt_policy * float(np.mean([r.steps for r in reached])),
        "control_effort": float(np.mean([r.effort for r in reached])),
    }


def summarise_policies(records_by_policy: Dict[str, List]) -> Dict[str, AggregateStats]:
    summary = {}
    for policy_id, records in records_by_policy.items():
        summary[policy_id] = aggregate(records)
        logger.info(
            f"{policy_id}: success {summary[policy_id].success_pct:.1f}%, "
            f"OOB {summary[policy_id].oob_pct:.1f}%, "
            f"fallback share {summary[policy_id].fallback_ratio_mean:.3f}"
        )
    return summary
