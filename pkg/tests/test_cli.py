import pytest
import yaml

from goal_reaching.main import EXIT_ARTIFACT, EXIT_CONFIG, main, parse_arguments
from goal_reaching.utils.artifacts import load_artifact
from goal_reaching.utils.exports import read_csv, read_header


def _run(*argv):
    main([str(arg) for arg in argv])


@pytest.fixture
def trained(small_run_config, tmp_path):
    _run("train", "--config", small_run_config)
    return tmp_path / "out"


@pytest.fixture
def refined(trained, small_run_config):
    _run("refine", "--config", small_run_config, "--nu-bar", 0.005)
    return trained


def test_parse_arguments():
    args = parse_arguments(["eval", "a.h5", "b.h5", "--goals", "5", "--nu-sweep"])
    assert args.artifacts == ["a.h5", "b.h5"]
    assert args.goals == 5
    assert args.nu_sweep == ""
    assert parse_arguments(["eval"]).nu_sweep is None


def test_train_writes_artifact_and_log(trained):
    artifact = load_artifact(trained / "benchmark_policy.h5")
    assert artifact.kind == "benchmark"
    assert artifact.q_table.values.shape == (17280, 9)
    assert artifact.provenance["train_episodes"] == 3
    assert artifact.provenance["eval_episodes"] == 2
    assert artifact.provenance["greedy_success_pct"] in (0.0, 50.0, 100.0)
    log = read_csv(trained / "training_log.csv")
    assert len(log) == 3
    header = read_header(trained / "training_log.csv")
    assert header["config_hash"] == artifact.provenance["config_hash"]
    assert (trained / "run_config.yaml").exists()


def test_training_is_reproducible(trained, small_run_config):
    first = load_artifact(trained / "benchmark_policy.h5").content_hash()
    _run("train", "--config", small_run_config)
    assert load_artifact(trained / "benchmark_policy.h5").content_hash() == first


def test_refine_writes_ledger(refined):
    artifact = load_artifact(refined / "stabilizer_policy.h5")
    assert artifact.kind == "stabilizer"
    assert artifact.provenance["nu_bar"] == 0.005
    assert artifact.critic.nu_bar == 0.005
    assert len(artifact.ledger) == 2
    assert artifact.provenance["benchmark_hash"] == load_artifact(
        refined / "benchmark_policy.h5"
    ).content_hash()
    assert len(read_csv(refined / "refinement_log.csv")) == 2


def test_eval_static_bundle(refined, small_run_config):
    _run("eval", "--config", small_run_config, "--export-heatmaps", "--nu-sweep", "0.001,0.1")
    episodes = read_csv(refined / "episodes.csv")
    assert sorted(episodes["policy"].unique()) == ["benchmark", "stabilizer"]
    assert len(episodes) == 6
    stats = read_csv(refined / "stats.csv")
    assert list(stats.columns) == ["Metric", "benchmark", "stabilizer"]
    comparison = read_csv(refined / "comparison.csv")
    assert comparison.loc[0, "candidate"] == "stabilizer"
    assert comparison.loc[0, "n_pairs"] == 3
    assert "goals_hash" in read_header(refined / "episodes.csv")
    for name in ("visits_benchmark", "visits_stabilizer", "cost_stabilizer", "cost_benchmark_stabilizer"):
        assert len(read_csv(refined / "heatmaps" / f"{name}.csv")) == 36 * 24
    sweep = read_csv(refined / "nu_sweep.csv")
    assert sorted(sweep["nu_bar"].unique()) == [0.001, 0.1]
    assert sorted(sweep["goal_index"].unique()) == [0, 1]


def test_eval_moving_goals(refined, small_run_config):
    _run("eval", "--config", small_run_config, "--mode", "moving", "--export-trajectories")
    episodes = read_csv(refined / "episodes.csv")
    assert set(episodes["goal_mode"]) == {"moving"}
    assert episodes.groupby("policy")["segment"].max().max() <= 1
    assert not (refined / "comparison.csv").exists()
    assert any((refined / "trajectories").glob("stabilizer_episode_*.csv"))


def test_export_dump(refined, small_run_config, capsys):
    _run("export", "--config", small_run_config, refined / "stabilizer_policy.h5")
    dumped = yaml.safe_load((refined / "stabilizer_policy.dump.yaml").read_text())
    assert dumped["kind"] == "stabilizer"
    assert dumped["ledger"]["episodes"] == 2
    assert "content_hash" in capsys.readouterr().out


def test_bad_configuration_exits_with_config_code(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"benchmark": {"alpha": 2.0}}))
    with pytest.raises(SystemExit) as excinfo:
        _run("train", "--config", path)
    assert excinfo.value.code == EXIT_CONFIG


def test_bad_nu_sweep_exits_with_config_code(small_run_config):
    with pytest.raises(SystemExit) as excinfo:
        _run("eval", "--config", small_run_config, "--nu-sweep", "0.1,-1")
    assert excinfo.value.code == EXIT_CONFIG


def test_missing_artifact_exits_with_artifact_code(small_run_config):
    with pytest.raises(SystemExit) as excinfo:
        _run("refine", "--config", small_run_config)
    assert excinfo.value.code == EXIT_ARTIFACT


def test_space_mismatch_exits_with_artifact_code(trained, small_run_config, tmp_path):
    other = yaml.safe_load(small_run_config.read_text())
    other["benchmark"]["N_v"] = 2
    other_path = tmp_path / "other.yaml"
    other_path.write_text(yaml.safe_dump(other))
    with pytest.raises(SystemExit) as excinfo:
        _run("refine", "--config", other_path)
    assert excinfo.value.code == EXIT_ARTIFACT
