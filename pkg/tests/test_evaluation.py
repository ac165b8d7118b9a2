import math

import numpy as np
import pytest

from goal_reaching.agents.benchmark_learner import BenchmarkController, QTable
from goal_reaching.agents.stabilizer import (
    StabilizedController,
    StabilizerParams,
    StageCostWeights,
    init_critic,
    update_budget,
)
from goal_reaching.evaluation.harness import (
    goal_list_hash,
    run_matched,
    run_moving_goal_sequence,
    run_nu_sweep,
    sample_goals,
)
from goal_reaching.evaluation.heatmaps import (
    cost_to_go_maps,
    most_visited_slice,
    visitation_counts,
    visitation_heatmap,
)
from goal_reaching.evaluation.statistics import (
    NOT_APPLICABLE,
    STAT_LABELS,
    TRAJECTORY_COLUMNS,
    aggregate,
    control_effort,
    effort_weight,
    lower_median,
    paired_comparison,
    reaching_summary,
    stats_frame,
)
from goal_reaching.simulation.kinematics import Goal, GoalMode, Outcome
from goal_reaching.simulation.statespace import quantize

V = TRAJECTORY_COLUMNS.index("v")
OMEGA = TRAJECTORY_COLUMNS.index("omega")


def test_lower_median():
    assert lower_median([4, 1, 3, 2]) == 2
    assert lower_median([5, 1, 3]) == 3
    assert lower_median([]) is None


def test_aggregate_single_success(make_record):
    stats = aggregate([make_record(Outcome.GOAL, steps=12, final_distance=0.05)])
    assert stats.success_pct == 100.0
    assert stats.steps_success_median == 12
    assert stats.final_distance_fail_median is None
    assert stats.final_distance_fail_mean is None
    frame = stats_frame({"benchmark": stats})
    assert list(frame["Metric"]) == list(STAT_LABELS.values())
    row = frame.set_index("Metric").loc["Final dis, median (fail)", "benchmark"]
    assert row == NOT_APPLICABLE


def test_aggregate_all_timeouts(make_record):
    records = [make_record(Outcome.TIMEOUT, steps=100, fallback_count=25) for _ in range(4)]
    stats = aggregate(records)
    assert stats.timeout_pct == 100.0
    assert stats.success_pct == 0.0
    assert stats.steps_success_mean is None
    assert stats.fallback_ratio_mean == pytest.approx(0.25)


def test_aggregate_mixed_outcomes(make_record):
    records = [
        make_record(Outcome.GOAL, steps=10, final_distance=0.1),
        make_record(Outcome.GOAL, steps=30, final_distance=0.1),
        make_record(Outcome.OUT_OF_BOUNDS, steps=20, final_distance=20.0),
        make_record(Outcome.TIMEOUT, steps=40, final_distance=10.0),
    ]
    stats = aggregate(records)
    assert stats.goal_pct == 50.0
    assert stats.oob_pct == 25.0
    assert stats.steps_median == 20
    assert stats.steps_success_mean == 20.0
    assert stats.final_distance_fail_median == 10.0


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_control_effort_constant_speed(limits):
    trajectory = np.zeros((201, len(TRAJECTORY_COLUMNS)))
    trajectory[:, V] = 0.25
    assert control_effort(trajectory, limits) == pytest.approx(0.625)


def test_control_effort_matches_dense_rectangle_sum(limits):
    rng = np.random.default_rng(8)
    trajectory = np.zeros((400, len(TRAJECTORY_COLUMNS)))
    trajectory[:, V] = np.clip(np.cumsum(rng.normal(0, 0.002, 400)) + 0.1, 0.0, 0.25)
    trajectory[:, OMEGA] = 0.1 * np.sin(np.linspace(0, 6, 400))
    integrand = trajectory[:, V] ** 2 + effort_weight(limits) * trajectory[:, OMEGA] ** 2
    # piecewise-linear interpolation evaluated on a fine grid
    fine_t = np.linspace(0.0, 399 * limits.dt_policy, 399 * 200 + 1)
    fine = np.interp(fine_t, limits.dt_policy * np.arange(400), integrand)
    rectangle = float(np.sum(0.5 * (fine[1:] + fine[:-1])) * (fine_t[1] - fine_t[0]))
    assert control_effort(trajectory, limits) == pytest.approx(rectangle, rel=1e-3)


def test_control_effort_zero_and_too_short(limits):
    assert control_effort(np.zeros((5, len(TRAJECTORY_COLUMNS))), limits) == 0.0
    with pytest.raises(ValueError):
        control_effort(np.zeros((1, len(TRAJECTORY_COLUMNS))), limits)


def test_effort_weight(limits):
    assert effort_weight(limits) == pytest.approx(2.78, abs=0.005)


def test_paired_comparison_counts_discordant_pairs(make_record):
    goals = [Goal(float(i) + 1.0, 2.0) for i in range(10)]
    baseline = [
        make_record(Outcome.GOAL if i < 5 else Outcome.TIMEOUT, steps=20 + i, goal=g)
        for i, g in enumerate(goals)
    ]
    candidate = [
        make_record(
            Outcome.GOAL if i < 9 else Outcome.TIMEOUT, steps=10 + 2 * i, policy_id="stabilizer", goal=g
        )
        for i, g in enumerate(goals)
    ]
    result = paired_comparison(baseline, candidate)
    assert result.candidate_only == 4
    assert result.baseline_only == 0
    assert result.p_candidate_better == pytest.approx(0.0625)
    assert result.p_baseline_better == pytest.approx(1.0)
    assert result.mutual_successes == 5
    assert result.candidate_steps_mean < result.baseline_steps_mean
    assert result.p_fewer_steps < 0.05
    assert len(result.to_frame()) == 1


def test_paired_comparison_rejects_mismatched_goals(make_record):
    with pytest.raises(ValueError):
        paired_comparison(
            [make_record(Outcome.GOAL, goal=Goal(1.0, 1.0))],
            [make_record(Outcome.GOAL, goal=Goal(2.0, 1.0))],
        )
    with pytest.raises(ValueError):
        paired_comparison([make_record(Outcome.GOAL)], [])


def test_reaching_summary(make_record):
    records = [
        make_record(Outcome.GOAL, steps=100, final_distance=0.08),
        make_record(Outcome.GOAL, steps=200, final_distance=0.04),
        make_record(Outcome.TIMEOUT, steps=6000, final_distance=9.0),
    ]
    summary = reaching_summary(records, 0.05)
    assert summary["successes"] == 2
    assert summary["distance_error_cm"] == pytest.approx(6.0)
    assert summary["reaching_time_s"] == pytest.approx(7.5)
    failed = reaching_summary(records[2:], 0.05)
    assert failed["reaching_time_s"] == NOT_APPLICABLE


def _single_visit_record(make_record, binning, d, e, v, omega):
    record = make_record(Outcome.GOAL, steps=1)
    for column, value in zip(("d", "e", "v", "omega"), (d, e, v, omega)):
        record.trajectory[0, TRAJECTORY_COLUMNS.index(column)] = value
    return record, quantize(d, e, v, omega, binning)


def test_single_visit_heatmap(make_record, binning):
    record, ds = _single_visit_record(make_record, binning, 5.2, 0.4, 0.03, 0.0)
    grid = visitation_heatmap([record], binning, (ds.i_v, ds.i_omega))
    assert grid.values.sum() == 1
    frame = grid.to_frame()
    hit = frame[(frame["i_d"] == ds.i_d) & (frame["i_e"] == ds.i_e)]
    assert hit["value"].iloc[0] == pytest.approx(math.log10(2.0))
    assert frame["value"].sum() == pytest.approx(math.log10(2.0))


def test_heatmap_auto_slice_and_empty_slice(make_record, binning):
    record, ds = _single_visit_record(make_record, binning, 5.2, 0.4, 0.03, 0.0)
    grid = visitation_heatmap([record], binning)
    assert grid.slice == (ds.i_v, ds.i_omega)
    other = visitation_heatmap([record], binning, ((ds.i_v + 1) % 4, ds.i_omega))
    assert not other.values.any()
    with pytest.raises(ValueError):
        visitation_heatmap([], binning)


def test_cost_to_go_maps(binning, grid):
    critic = init_critic(binning, grid.n_actions, StageCostWeights(), StabilizerParams())
    critic.w[:] = 0.0
    q0 = QTable(np.ones((binning.cardinality, grid.n_actions)))
    benchmark, stabilizer = cost_to_go_maps(q0, critic, binning, (0, 2))
    assert benchmark.values.shape == (36, 24)
    assert np.all(benchmark.values == -1.0)
    assert not stabilizer.values.any()


def test_sample_goals_is_reproducible(limits):
    first = sample_goals(20, limits.workspace, 0.2, np.random.default_rng(3))
    second = sample_goals(20, limits.workspace, 0.2, np.random.default_rng(3))
    assert first == second
    assert goal_list_hash(first) == goal_list_hash(second)
    with pytest.raises(ValueError):
        sample_goals(0, limits.workspace, 0.2, np.random.default_rng(3))


def test_run_matched_identical_policies(short_rollout_env, binning, grid):
    q = QTable(np.random.default_rng(2).normal(size=(binning.cardinality, grid.n_actions)))
    goals = sample_goals(3, short_rollout_env.limits.workspace, 0.2, np.random.default_rng(4))
    records = run_matched(
        goals,
        [BenchmarkController(q, "first"), BenchmarkController(q, "second")],
        short_rollout_env,
        record_rewards=True,
    )
    assert list(records) == ["first", "second"]
    for a, b in zip(records["first"], records["second"]):
        assert a.goal == b.goal
        assert a.outcome is b.outcome
        assert np.array_equal(a.trajectory, b.trajectory)
        assert a.trajectory.shape == (a.steps + 1, len(TRAJECTORY_COLUMNS))
        assert a.rewards.shape == (a.steps, 15)
    counts = visitation_counts(records["first"], binning)
    assert counts.sum() == sum(r.steps for r in records["first"])
    assert most_visited_slice(counts)[0] in range(4)


def test_run_matched_zero_goals(short_rollout_env, binning, grid):
    q = QTable.zeros(binning.cardinality, grid.n_actions)
    assert run_matched([], [BenchmarkController(q)], short_rollout_env) == {"benchmark": []}


def test_moving_goal_sequence(short_rollout_env, binning, grid):
    q = QTable(np.random.default_rng(5).normal(size=(binning.cardinality, grid.n_actions)))
    records = run_moving_goal_sequence(
        BenchmarkController(q), 3, short_rollout_env, np.random.default_rng(6)
    )
    assert 1 <= len(records) <= 3
    assert [r.segment for r in records] == list(range(len(records)))
    assert all(r.goal.mode is GoalMode.MOVING for r in records)
    assert all(r.goal.speed == pytest.approx(0.125) for r in records)
    # later segments start where the previous one ended
    for previous, current in zip(records, records[1:]):
        assert np.array_equal(previous.trajectory[-1, 1:6], current.trajectory[0, 1:6])


def test_nu_sweep(short_rollout_env, binning, grid):
    weights = StageCostWeights()
    params = StabilizerParams()
    critic = init_critic(binning, grid.n_actions, weights, params)
    q = QTable.zeros(binning.cardinality, grid.n_actions)
    goals = sample_goals(2, short_rollout_env.limits.workspace, 0.2, np.random.default_rng(7))
    sweep = run_nu_sweep(
        goals, BenchmarkController(q), critic, [0.001, 0.1], short_rollout_env, weights, params
    )
    assert list(sweep) == [0.001, 0.1]
    assert all(len(records) == 2 for records in sweep.values())
    assert sweep[0.1][0].policy_id == "stabilizer_nu_0.1"


def test_visitation_counts_match_recorded_steps(short_rollout_env, binning, grid):
    weights = StageCostWeights()
    params = StabilizerParams()
    q = QTable(np.random.default_rng(8).normal(size=(binning.cardinality, grid.n_actions)))
    critic = init_critic(binning, grid.n_actions, weights, params)
    goals = sample_goals(4, short_rollout_env.limits.workspace, 0.2, np.random.default_rng(9))
    records = run_matched(
        goals,
        [BenchmarkController(q), StabilizedController(critic, BenchmarkController(q), weights, params)],
        short_rollout_env,
    )

    _, _, n_v, n_omega = binning.shape
    for policy_records in records.values():
        total = sum(r.steps for r in policy_records)
        assert total > 0
        counts = visitation_counts(policy_records, binning)
        assert counts.sum() == total
        by_slice = sum(
            visitation_heatmap(policy_records, binning, (i_v, i_omega)).values.sum()
            for i_v in range(n_v)
            for i_omega in range(n_omega)
        )
        assert by_slice == total


def test_larger_margin_leaves_fewer_critic_steps(short_rollout_env, binning, grid):
    weights = StageCostWeights()
    params = StabilizerParams()
    q = QTable(np.random.default_rng(10).normal(size=(binning.cardinality, grid.n_actions)))
    critic = init_critic(binning, grid.n_actions, weights, params)
    goals = sample_goals(3, short_rollout_env.limits.workspace, 0.2, np.random.default_rng(11))
    margins = [0.001, 0.01, 1e4]

    sweep = run_nu_sweep(
        goals, BenchmarkController(q), critic, margins, short_rollout_env, weights, params
    )
    baseline = run_matched(goals, [BenchmarkController(q)], short_rollout_env)["benchmark"]

    for i, goal in enumerate(goals):
        s0 = short_rollout_env.reset(goal).packed
        q_ref0 = float(critic.w[s0].min())
        for nu_bar in margins:
            record = sweep[nu_bar][i]
            assert record.steps - record.fallback_count <= update_budget(q_ref0, nu_bar)

    # with no budget every step is the benchmark's
    fallback = TRAJECTORY_COLUMNS.index("fallback")
    for stabilized, base in zip(sweep[1e4], baseline):
        assert stabilized.fallback_count == stabilized.steps
        assert stabilized.outcome is base.outcome
        assert np.array_equal(
            np.delete(stabilized.trajectory, fallback, axis=1),
            np.delete(base.trajectory, fallback, axis=1),
        )
