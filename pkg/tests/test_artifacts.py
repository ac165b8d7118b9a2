import numpy as np
import pandas as pd
import pytest

from goal_reaching.agents.benchmark_learner import QTable
from goal_reaching.agents.stabilizer import LEDGER_COLUMNS, CriticState
from goal_reaching.simulation.statespace import ActionGrid, BinningConfig
from goal_reaching.utils.artifacts import (
    ArtifactError,
    PolicyArtifact,
    check_space,
    load_artifact,
    read_format_version,
    save_artifact,
    summarize_artifact,
)

BINNING = BinningConfig(
    n_d=2,
    d_max=2.0,
    n_theta=3,
    n_v=1,
    v_range=(0.0, 0.25),
    n_omega=1,
    omega_range=(-0.15, 0.15),
)
GRID = ActionGrid((-0.1, 0.0, 0.1), (0.0,))


def _artifact(with_critic: bool = True, version: int = 1) -> PolicyArtifact:
    rng = np.random.default_rng(0)
    q = QTable(rng.normal(size=(BINNING.cardinality, GRID.n_actions)))
    critic = ledger = None
    if with_critic:
        critic = CriticState(
            w=rng.uniform(0.1, 1.0, size=(BINNING.cardinality, GRID.n_actions)),
            phi_norms=np.linspace(0.1, 1.0, BINNING.cardinality),
            nu_bar=0.01,
            c_min=0.1,
            c_max=500.0,
            alpha_crit=0.1,
        )
        ledger = pd.DataFrame(
            [
                [0, 1.5, -2.0, 0.8, 79, 12, 30, 4, 42, "goal"],
                [1, -3.0, 4.0, 0.7, 69, 0, 60, 0, 60, "timeout"],
            ],
            columns=LEDGER_COLUMNS,
        )
    return PolicyArtifact(
        binning=BINNING,
        grid=GRID,
        q_table=q,
        critic=critic,
        ledger=ledger,
        provenance={"rule": "qlearning", "seed": 3, "config_hash": "abc123"},
        config={"run": {"seed": 3}},
        format_version=version,
    )


def test_round_trip_preserves_content(tmp_path):
    artifact = _artifact()
    path = save_artifact(artifact, tmp_path / "stabilizer_policy.h5")
    loaded = load_artifact(path)
    assert loaded.kind == "stabilizer"
    assert loaded.binning == BINNING
    assert loaded.grid == GRID
    np.testing.assert_array_equal(loaded.q_table.values, artifact.q_table.values)
    np.testing.assert_array_equal(loaded.critic.w, artifact.critic.w)
    assert loaded.critic.nu_bar == 0.01
    assert list(loaded.ledger["outcome"]) == ["goal", "timeout"]
    assert loaded.provenance["seed"] == 3
    assert loaded.content_hash() == artifact.content_hash()


def test_benchmark_artifact_has_no_critic(tmp_path):
    path = save_artifact(_artifact(with_critic=False), tmp_path / "benchmark_policy.h5")
    loaded = load_artifact(path)
    assert loaded.kind == "benchmark"
    assert loaded.critic is None and loaded.ledger is None


def test_unsupported_version_is_rejected(tmp_path):
    path = save_artifact(_artifact(version=99), tmp_path / "future.h5")
    assert read_format_version(path) == 99
    with pytest.raises(ArtifactError, match="99"):
        load_artifact(path)


def test_missing_and_unreadable_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_artifact(tmp_path / "absent.h5")
    garbage = tmp_path / "garbage.h5"
    garbage.write_text("not an hdf5 file")
    with pytest.raises(ArtifactError):
        load_artifact(garbage)


def test_space_mismatch(tmp_path):
    artifact = _artifact(with_critic=False)
    check_space(artifact, BINNING, GRID)
    other_grid = ActionGrid((-0.1, 0.0, 0.1), (-0.02, 0.0, 0.02))
    with pytest.raises(ArtifactError, match="do not match"):
        check_space(artifact, BINNING, other_grid)


def test_summary():
    summary = summarize_artifact(_artifact())
    assert summary["kind"] == "stabilizer"
    assert summary["config_hash"] == "abc123"
    assert summary["q_table"]["shape"] == [6, 3]
    assert summary["q_table"]["nonzero"] > 0
    assert summary["ledger"] == {
        "episodes": 2,
        "accepted_total": 12,
        "fallbacks_total": 90,
        "steps_total": 102,
    }
