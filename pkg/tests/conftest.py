import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from goal_reaching.config.config import RunConfig  # noqa: E402
from goal_reaching.evaluation.harness import EpisodeRecord  # noqa: E402
from goal_reaching.evaluation.statistics import TRAJECTORY_COLUMNS  # noqa: E402
from goal_reaching.simulation.environment import GoalReachingEnv  # noqa: E402
from goal_reaching.simulation.kinematics import Goal, Outcome  # noqa: E402


@pytest.fixture(scope="session")
def config() -> RunConfig:
    return RunConfig()


@pytest.fixture(scope="session")
def limits(config):
    """Rollout limits: dt_policy 0.05 integrated in 50 substeps."""
    return config.motion_limits


@pytest.fixture(scope="session")
def train_limits(config):
    """Training limits: one Euler step per 0.05 s policy step."""
    return config.train_motion_limits


@pytest.fixture(scope="session")
def binning(config):
    return config.binning


@pytest.fixture(scope="session")
def grid(config):
    return config.action_grid


@pytest.fixture(scope="session")
def weights(config):
    return config.reward_weights


@pytest.fixture
def short_env(config, train_limits) -> GoalReachingEnv:
    """Training environment with a short horizon."""
    env = config.make_env(train_limits)
    env.max_steps = 60
    return env


@pytest.fixture
def short_rollout_env(config, limits) -> GoalReachingEnv:
    env = config.make_env(limits)
    env.max_steps = 40
    return env


@pytest.fixture
def small_run_config(tmp_path) -> Path:
    """Run file with tiny episode counts, writing into a temporary directory."""
    data = {
        "benchmark": {"episodes": 3, "evalEpisodes": 2},
        "stabilizer": {"episodes": 2},
        "episode": {"max_steps": 30},
        "moving_goal": {"n_goals": 2},
        "evaluation": {"goals": 3, "nu_sweep_goals": 2},
        "run": {"output_dir": str(tmp_path / "out"), "log_every": 0},
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def _make_record(
    outcome: Outcome,
    steps: int = 10,
    final_distance: float = 1.0,
    fallback_count: int = 0,
    policy_id: str = "benchmark",
    goal: Goal = Goal(3.0, 4.0),
) -> EpisodeRecord:
    """Synthetic record with a stationary trajectory of `steps` + 1 samples."""
    trajectory = np.zeros((steps + 1, len(TRAJECTORY_COLUMNS)))
    trajectory[:, TRAJECTORY_COLUMNS.index("t")] = 0.05 * np.arange(steps + 1)
    return EpisodeRecord(
        goal=goal,
        policy_id=policy_id,
        outcome=outcome,
        steps=steps,
        final_distance=final_distance,
        fallback_count=fallback_count,
        trajectory=trajectory,
        effort=0.0,
    )


@pytest.fixture
def make_record():
    return _make_record
