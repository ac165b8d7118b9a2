import math
from dataclasses import replace

import numpy as np
import pytest

from goal_reaching.simulation.kinematics import Outcome
from goal_reaching.simulation.reward import (
    REWARD_TERMS,
    RewardWeights,
    ShapingMode,
    Transition,
    potential,
    potential_difference,
    reward_bound,
    reward_terms,
    shaping_reward,
    stopping_angle,
    task_reward,
    total_reward,
)


def still(**changes) -> Transition:
    base = Transition(
        d_t=5.0,
        d_next=5.0,
        e_t=0.0,
        e_next=0.0,
        v_next=0.0,
        omega_t=0.0,
        omega_next=0.0,
        a_v=0.0,
        a_omega=0.0,
    )
    return replace(base, **changes)


def test_task_reward_distance_progress():
    w = RewardWeights(k_step=0.0)
    assert task_reward(still(d_t=10.0, d_next=9.9), w) == pytest.approx(0.1)


def test_task_reward_timeout_penalty():
    w = RewardWeights(k_step=0.0)
    tr = still(d_t=30.0, d_next=30.0, outcome=Outcome.TIMEOUT, d_T=30.0)
    assert task_reward(tr, w) == pytest.approx(-3.0)


def test_task_reward_timeout_only_on_timeout():
    w = RewardWeights(k_step=0.0)
    assert task_reward(still(d_T=30.0, outcome=Outcome.OUT_OF_BOUNDS), w) == 0.0


def test_task_reward_step_cost():
    assert task_reward(still(), RewardWeights()) == pytest.approx(-0.01)


def test_heading_progress_term():
    _, terms = shaping_reward(still(e_t=0.2, e_next=0.1), RewardWeights(k_theta=1.0))
    assert terms.r_theta == pytest.approx(0.1)


def test_aligned_spin_penalty():
    _, terms = shaping_reward(still(omega_next=0.1), RewardWeights(k_omega=1.0))
    assert terms.r_omega == pytest.approx(-0.01)


def test_stopping_angle():
    assert stopping_angle(0.15, RewardWeights(a_omega_B=0.02)) == pytest.approx(0.5625)


def test_overshoot_penalty_uses_stopping_angle():
    w = RewardWeights(a_omega_B=0.02, e_pad=0.05, k_wstop=1.0)
    _, terms = shaping_reward(still(e_t=0.1, e_next=0.1, omega_next=0.15), w)
    assert terms.r_stop == pytest.approx(-((0.5625 - 0.15) ** 2))


def test_flip_penalty():
    w = RewardWeights(k_wflip=0.5)
    _, terms = shaping_reward(still(omega_t=0.05, omega_next=-0.01), w)
    assert terms.r_flip == -0.5


def test_goal_bonus_inside_tolerance():
    _, terms = shaping_reward(still(d_t=0.15, d_next=0.05), RewardWeights())
    assert terms.r_goal == pytest.approx(0.15)


def test_all_zero_transition_is_zero():
    tr = still(d_t=0.0, d_next=0.0)
    assert total_reward(tr, RewardWeights(k_step=0.0)) == 0.0


@pytest.mark.parametrize(
    "d, e, expected", [(0.0, 0.0, 0.0), (10.0, math.pi / 2, 10.0 + math.pi / 2)]
)
def test_potential(d, e, expected):
    assert potential(d, e, RewardWeights()) == pytest.approx(expected)


def test_potential_rejects_negative_distance():
    with pytest.raises(ValueError):
        potential(-1.0, 0.0, RewardWeights())


@pytest.mark.parametrize("mode", list(ShapingMode))
def test_distance_and_heading_terms_equal_potential_difference(mode):
    rng = np.random.default_rng(11)
    w = RewardWeights(k_d=1.3, k_theta=0.7, shaping_mode=mode)
    for _ in range(500):
        tr = still(
            d_t=float(rng.uniform(0, 35)),
            d_next=float(rng.uniform(0, 35)),
            e_t=float(rng.uniform(-math.pi, math.pi)),
            e_next=float(rng.uniform(-math.pi, math.pi)),
        )
        terms = dict(zip(REWARD_TERMS, reward_terms(tr, w)))
        assert terms["r_d"] + terms["r_theta"] == pytest.approx(potential_difference(tr, w))


def test_reward_terms_sum_to_total():
    tr = still(d_t=4.0, d_next=3.99, e_t=0.3, e_next=0.29, v_next=0.2, omega_t=0.01,
               omega_next=0.02, a_v=0.1, a_omega=0.02, e_0_sign=-1.0)
    w = RewardWeights()
    terms = reward_terms(tr, w)
    assert terms.shape == (15,)
    assert terms.sum() == pytest.approx(total_reward(tr, w))


def test_reward_bound_covers_reachable_transitions(train_limits):
    w = RewardWeights()
    bound = reward_bound(w, train_limits)
    rng = np.random.default_rng(4)
    max_progress = train_limits.v_max * train_limits.dt_policy
    for _ in range(2000):
        d_t = float(rng.uniform(0.0, 35.0))
        tr = Transition(
            d_t=d_t,
            d_next=max(0.0, d_t + float(rng.uniform(-max_progress, max_progress))),
            e_t=float(rng.uniform(-math.pi, math.pi)),
            e_next=float(rng.uniform(-math.pi, math.pi)),
            v_next=float(rng.uniform(0.0, 0.25)),
            omega_t=float(rng.uniform(-0.15, 0.15)),
            omega_next=float(rng.uniform(-0.15, 0.15)),
            a_v=float(rng.choice([-0.1, 0.0, 0.1])),
            a_omega=float(rng.choice([-0.02, 0.0, 0.02])),
            outcome=Outcome.TIMEOUT if rng.random() < 0.1 else Outcome.RUNNING,
            d_T=d_t,
            e_0_sign=float(rng.choice([-1.0, 0.0, 1.0])),
        )
        assert abs(total_reward(tr, w)) <= bound


def test_reward_weights_reject_negative_gain():
    with pytest.raises(ValueError, match="k_v"):
        RewardWeights(k_v=-1.0)
