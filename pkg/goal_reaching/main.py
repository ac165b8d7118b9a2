"""
Goal-Reaching Controller - Command Line Interface
================================================

Trains the tabular benchmark policy, refines the stabilizer critic on top of
it, evaluates policies on matched goals and dumps stored artifacts.

Commands:
    train   -> benchmark_policy.h5, training_log.csv, run_config.yaml
    refine  -> stabilizer_policy.h5, refinement_log.csv, run_config.yaml
    eval    -> episodes.csv, stats.csv, comparison.csv, reaching_summary.csv
               plus optional trajectories/, heatmaps/, reward_audit/, nu_sweep.csv
    export  -> YAML dump on stdout and <artifact>.dump.yaml

Exit codes: 0 success, 1 configuration error, 2 artifact error, 3 runtime failure.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from goal_reaching.agents.benchmark_learner import (
    BenchmarkController,
    UpdateRule,
    is_empty,
    success_rate,
    train,
)
from goal_reaching.agents.stabilizer import (
    StabilizedController,
    init_critic,
    refine,
)
from goal_reaching.config.config import ConfigurationError, RunConfig
from goal_reaching.evaluation.harness import (
    EpisodeRecord,
    goal_list_hash,
    run_matched,
    run_moving_goal_sequence,
    run_nu_sweep,
    sample_goals,
)
from goal_reaching.evaluation.heatmaps import (
    HeatmapGrid,
    cost_to_go_maps,
    visitation_heatmap,
)
from goal_reaching.evaluation.statistics import (
    aggregate,
    paired_comparison,
    reaching_summary,
    stats_frame,
    summarise_policies,
)
from goal_reaching.simulation.environment import Controller, RuleMode
from goal_reaching.utils.artifacts import (
    ArtifactError,
    PolicyArtifact,
    check_space,
    load_artifact,
    save_artifact,
    summarize_artifact,
)
from goal_reaching.utils.exports import (
    dump_yaml,
    episodes_frame,
    export_reward_audit,
    export_trajectories,
    nu_sweep_frame,
    write_csv,
    write_yaml,
)
from goal_reaching.utils.utils import make_rng, setup_logging

logger = setup_logging(__name__)

BENCHMARK_ARTIFACT = "benchmark_policy.h5"
STABILIZER_ARTIFACT = "stabilizer_policy.h5"

EXIT_CONFIG = 1
EXIT_ARTIFACT = 2
EXIT_RUNTIME = 3


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments for the four pipeline commands.

    Returns:
        Parsed arguments namespace
    """
    common = argparse.ArgumentParser(add_help=False)
    run_group = common.add_argument_group(
        "Run Options", "Configuration, seed and output location"
    )
    run_group.add_argument("--config", type=str, help="Path to a run configuration YAML")
    run_group.add_argument("--seed", type=int, help="Root random seed")
    run_group.add_argument("--out", type=str, help="Output directory")
    run_group.add_argument(
        "--verbose", "-v", action="store_true", help="Enable verbose logging output"
    )

    parser = argparse.ArgumentParser(
        description="Goal-reaching controller - train, refine, evaluate and inspect policies",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m goal_reaching.main train                          # Train the benchmark policy with defaults
  python -m goal_reaching.main train --rule sarsa --seed 3    # Train with SARSA on another seed
  python -m goal_reaching.main refine --nu-bar 0.001          # Refine the stabilizer with a smaller margin
  python -m goal_reaching.main eval --goals 200 --export-heatmaps
  python -m goal_reaching.main eval --mode moving --export-trajectories
  python -m goal_reaching.main eval --nu-sweep 0.001,0.01,0.1 # Overlay stabilizer runs for several margins
  python -m goal_reaching.main export output/stabilizer_policy.h5
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    train_parser = subparsers.add_parser(
        "train", parents=[common], help="Train the benchmark policy"
    )
    train_parser.add_argument("--episodes", type=int, help="Training episodes")
    train_parser.add_argument(
        "--rule", choices=[r.value for r in UpdateRule], help="TD update rule"
    )

    refine_parser = subparsers.add_parser(
        "refine", parents=[common], help="Refine the stabilizer critic"
    )
    refine_parser.add_argument(
        "--benchmark",
        type=str,
        help=f"Benchmark artifact (default: <out>/{BENCHMARK_ARTIFACT})",
    )
    refine_parser.add_argument("--episodes", type=int, help="Refinement episodes")
    refine_parser.add_argument(
        "--nu-bar", type=float, help="Required critic decrease per accepted update"
    )

    eval_parser = subparsers.add_parser(
        "eval", parents=[common], help="Evaluate policies on matched goals"
    )
    eval_parser.add_argument(
        "artifacts",
        nargs="*",
        help=f"Policy artifacts (default: <out>/{STABILIZER_ARTIFACT})",
    )
    eval_group = eval_parser.add_argument_group(
        "Evaluation Options", "Goal sampling and optional exports"
    )
    eval_group.add_argument("--goals", type=int, help="Number of goals")
    eval_group.add_argument("--mode", choices=["static", "moving"], help="Goal mode")
    eval_group.add_argument(
        "--export-heatmaps", action="store_true", help="Export visitation and cost-to-go grids"
    )
    eval_group.add_argument(
        "--export-trajectories", action="store_true", help="Export per-episode trajectories"
    )
    eval_group.add_argument(
        "--export-reward-audit", action="store_true", help="Export per-step reward terms"
    )
    eval_group.add_argument(
        "--nu-sweep",
        nargs="?",
        const="",
        default=None,
        metavar="NU,NU,...",
        help="Roll out the stabilizer for several margins (default: configured list)",
    )

    export_parser = subparsers.add_parser(
        "export", parents=[common], help="Dump an artifact in readable form"
    )
    export_parser.add_argument("artifact", type=str, help="Artifact to dump")

    return parser.parse_args(argv)


def _parse_nu_values(raw: str) -> List[float]:
    try:
        values = [float(item) for item in raw.split(",") if item.strip()]
    except ValueError:
        raise ConfigurationError([f"--nu-sweep: cannot parse {raw!r}"]) from None
    if not values or any(v <= 0 for v in values):
        raise ConfigurationError([f"--nu-sweep: need positive values, got {raw!r}"])
    return values


def build_overrides(args: argparse.Namespace) -> Dict:
    """Map command-line flags onto dotted configuration keys."""
    overrides = {"run.seed": args.seed, "run.output_dir": args.out}
    if args.command == "train":
        overrides["benchmark.episodes"] = args.episodes
        overrides["benchmark.rule"] = args.rule
    elif args.command == "refine":
        overrides["stabilizer.episodes"] = args.episodes
        overrides["stabilizer.nu_bar"] = args.nu_bar
    elif args.command == "eval":
        overrides["evaluation.goals"] = args.goals
        overrides["evaluation.mode"] = args.mode
        for flag in ("export_heatmaps", "export_trajectories", "export_reward_audit"):
            if getattr(args, flag):
                overrides[f"evaluation.{flag}"] = True
        if args.nu_sweep:
            overrides["evaluation.nu_sweep"] = _parse_nu_values(args.nu_sweep)
    return overrides


def run_header(config: RunConfig, command: str) -> Dict:
    return {"config_hash": config.config_hash, "seed": config.seed, "command": command}


# =================================================================
# TRAIN
# =================================================================


def cmd_train(config: RunConfig) -> Path:
    """Train the benchmark policy and write its artifact, training log and config."""
    out_dir = config.output_dir
    env = config.make_env(config.train_motion_limits)
    train_cfg = config.train_config

    q, log = train(env, train_cfg)

    eval_goals = sample_goals(
        config.eval_episodes,
        env.limits.workspace,
        config.min_goal_distance,
        make_rng(config.seed, "eval"),
        env.start,
    )
    greedy = run_matched(eval_goals, [BenchmarkController(q)], env)["benchmark"]
    greedy_success = aggregate(greedy).success_pct
    logger.info(f"Greedy success over {len(eval_goals)} fresh goals: {greedy_success:.1f}%")

    provenance = {
        "rule": train_cfg.rule.value,
        "train_episodes": train_cfg.episodes,
        "seed": config.seed,
        "config_hash": config.config_hash,
        "training_success_pct": success_rate(log),
        "eval_episodes": len(eval_goals),
        "greedy_success_pct": greedy_success,
    }
    artifact = PolicyArtifact(
        binning=env.binning,
        grid=env.grid,
        q_table=q,
        provenance=provenance,
        config=config.to_dict(),
    )
    path = save_artifact(artifact, out_dir / BENCHMARK_ARTIFACT)
    write_csv(log, out_dir / "training_log.csv", run_header(config, "train"))
    config.save(out_dir / "run_config.yaml")
    logger.info(f"Benchmark artifact hash: {artifact.content_hash()}")
    return path


# =================================================================
# REFINE
# =================================================================


def _load_checked(path: Path, config: RunConfig) -> PolicyArtifact:
    artifact = load_artifact(path)
    check_space(artifact, config.binning, config.action_grid)
    return artifact


def cmd_refine(config: RunConfig, benchmark_path: Optional[Path] = None) -> Path:
    """Refine a fresh critic over the benchmark policy and write the stabilizer artifact."""
    out_dir = config.output_dir
    benchmark_path = Path(benchmark_path or out_dir / BENCHMARK_ARTIFACT)
    source = _load_checked(benchmark_path, config)

    env = config.make_env(config.motion_limits)
    params = config.stabilizer_params
    stage_weights = config.stage_cost_weights
    critic = init_critic(env.binning, env.n_actions, stage_weights, params)
    benchmark = BenchmarkController(source.q_table)

    empty_benchmark = is_empty(source.q_table)
    rng = make_rng(config.seed, "refine")
    goals = (
        sample_goals(params.episodes, env.limits.workspace, config.min_goal_distance, rng, env.start)
        if params.episodes
        else []
    )
    ledger = refine(
        env, critic, benchmark, goals, stage_weights, params, log_every=config.log_every
    )

    provenance = {
        "rule": source.provenance.get("rule"),
        "train_episodes": source.provenance.get("train_episodes"),
        "benchmark_hash": source.content_hash(),
        "refine_episodes": params.episodes,
        "nu_bar": params.nu_bar,
        "knowledge_transfer": params.knowledge_transfer,
        "seed": config.seed,
        "config_hash": config.config_hash,
        "empty_benchmark": empty_benchmark,
    }
    artifact = PolicyArtifact(
        binning=env.binning,
        grid=env.grid,
        q_table=source.q_table,
        critic=critic,
        ledger=ledger,
        provenance=provenance,
        config=config.to_dict(),
    )
    path = save_artifact(artifact, out_dir / STABILIZER_ARTIFACT)
    header = run_header(config, "refine")
    if empty_benchmark:
        header["note"] = "empty benchmark table; fallback steps use action 0"
    write_csv(ledger, out_dir / "refinement_log.csv", header)
    config.save(out_dir / "run_config.yaml")
    return path


# =================================================================
# EVAL
# =================================================================


def _unique_id(base: str, taken: Sequence[str]) -> str:
    if base not in taken:
        return base
    index = 2
    while f"{base}_{index}" in taken:
        index += 1
    return f"{base}_{index}"


def build_controllers(
    artifacts: Sequence[PolicyArtifact], config: RunConfig
) -> Tuple[List[Controller], List[Tuple[str, PolicyArtifact]]]:
    """
    One controller per artifact; a stabilizer artifact also contributes its
    embedded benchmark unless a benchmark artifact was given explicitly.

    Returns:
        (controllers in evaluation order, (policy_id, artifact) of every stabilizer)
    """
    controllers: List[Controller] = []
    stabilizers: List[Tuple[str, PolicyArtifact]] = []
    has_benchmark = any(a.kind == "benchmark" for a in artifacts)

    def ids() -> List[str]:
        return [c.policy_id for c in controllers]

    for artifact in artifacts:
        if artifact.kind == "benchmark":
            controllers.append(
                BenchmarkController(artifact.q_table, _unique_id("benchmark", ids()))
            )
            continue
        if not has_benchmark:
            controllers.insert(
                0, BenchmarkController(artifact.q_table, _unique_id("benchmark", ids()))
            )
            has_benchmark = True
        critic = artifact.critic
        params = replace(
            config.stabilizer_params,
            nu_bar=critic.nu_bar,
            c_min=critic.c_min,
            c_max=critic.c_max,
            alpha_crit=critic.alpha_crit,
        )
        policy_id = _unique_id("stabilizer", ids())
        controllers.append(
            StabilizedController(
                critic,
                BenchmarkController(artifact.q_table),
                config.stage_cost_weights,
                params,
                frozen=True,
                policy_id=policy_id,
            )
        )
        stabilizers.append((policy_id, artifact))
    return controllers, stabilizers


def _heatmap_frame(grid: HeatmapGrid) -> pd.DataFrame:
    frame = grid.to_frame(log_counts=False)
    if grid.kind == "visits":
        frame["display"] = np.log10(frame["value"] + 1.0)
    return frame


def export_heatmaps(
    records: Dict[str, List[EpisodeRecord]],
    stabilizers: Sequence[Tuple[str, PolicyArtifact]],
    config: RunConfig,
    header: Dict,
) -> None:
    out_dir = config.output_dir / "heatmaps"
    slice_ = config.heatmap_slice
    for policy_id, policy_records in records.items():
        grid = visitation_heatmap(policy_records, config.binning, slice_)
        # later grids share the slice chosen for the first policy
        slice_ = grid.slice
        write_csv(_heatmap_frame(grid), out_dir / f"visits_{policy_id}.csv", header)
    for policy_id, artifact in stabilizers:
        benchmark_grid, stabilizer_grid = cost_to_go_maps(
            artifact.q_table, artifact.critic, config.binning, slice_
        )
        write_csv(_heatmap_frame(benchmark_grid), out_dir / f"cost_benchmark_{policy_id}.csv", header)
        write_csv(_heatmap_frame(stabilizer_grid), out_dir / f"cost_{policy_id}.csv", header)
    logger.info(f"Exported heatmaps for slice i_v={slice_[0]}, i_omega={slice_[1]} to {out_dir}")


def cmd_eval(
    config: RunConfig,
    artifact_paths: Sequence[Path] = (),
    n_goals: Optional[int] = None,
    nu_sweep: bool = False,
) -> Dict[str, List[EpisodeRecord]]:
    """
    Evaluate every policy on the same goals and write the result bundle.

    Returns:
        Episode records keyed by policy id
    """
    out_dir = config.output_dir
    evaluation = config.evaluation
    paths = [Path(p) for p in artifact_paths] or [out_dir / STABILIZER_ARTIFACT]
    artifacts = [_load_checked(path, config) for path in paths]
    controllers, stabilizers = build_controllers(artifacts, config)

    env = config.make_env(config.motion_limits)
    mode = evaluation["mode"]
    header = run_header(config, f"eval {mode}")
    record_rewards = evaluation["export_reward_audit"]

    logger.info("=" * 40)
    logger.info(
        f"Evaluating {', '.join(c.policy_id for c in controllers)} on {mode} goals"
    )
    logger.info("=" * 40)

    if mode == "static":
        n = n_goals or int(evaluation["goals"])
        goals = sample_goals(
            n, env.limits.workspace, config.min_goal_distance, make_rng(config.seed, "goals"), env.start
        )
        header["goals_hash"] = goal_list_hash(goals)
        records = run_matched(goals, controllers, env, RuleMode.EVAL, record_rewards)
    else:
        moving = config.moving_goal
        n = n_goals or int(moving["n_goals"])
        records = {}
        for controller in controllers:
            # every policy chases goals drawn from the same stream
            records[controller.policy_id] = run_moving_goal_sequence(
                controller,
                n,
                env,
                make_rng(config.seed, "moving_goal"),
                speed_fraction=float(moving["speed_fraction"]),
                min_dist=config.min_goal_distance,
                record_rewards=record_rewards,
            )

    write_csv(episodes_frame(records), out_dir / "episodes.csv", header)
    write_csv(stats_frame(summarise_policies(records)), out_dir / "stats.csv", header)
    write_csv(
        pd.DataFrame([reaching_summary(r, env.limits.dt_policy) for r in records.values()]),
        out_dir / "reaching_summary.csv",
        header,
    )

    policy_ids = list(records)
    if mode == "static" and len(policy_ids) > 1:
        baseline = records[policy_ids[0]]
        comparison = pd.concat(
            [paired_comparison(baseline, records[pid]).to_frame() for pid in policy_ids[1:]],
            ignore_index=True,
        )
        write_csv(comparison, out_dir / "comparison.csv", header)
        for row in comparison.itertuples():
            logger.info(
                f"{row.candidate} vs {row.baseline}: {row.candidate_success} vs "
                f"{row.baseline_success} successes, McNemar p={row.p_candidate_better:.4g}"
            )
    elif mode == "moving":
        logger.info("Moving-goal segments diverge between policies; paired tests skipped")

    if evaluation["export_trajectories"]:
        export_trajectories(records, out_dir / "trajectories", header)
    if record_rewards:
        export_reward_audit(records, out_dir / "reward_audit", header)
    if evaluation["export_heatmaps"]:
        export_heatmaps(records, stabilizers, config, header)

    if nu_sweep:
        run_sweep(config, stabilizers, evaluation["nu_sweep"], header)

    return records


def run_sweep(
    config: RunConfig,
    stabilizers: Sequence[Tuple[str, PolicyArtifact]],
    nu_values: Sequence[float],
    header: Dict,
) -> Path:
    """Overlay stabilizer rollouts for several margins on a small shared goal list."""
    if not stabilizers:
        raise ArtifactError("The margin sweep needs a stabilizer artifact")
    _, artifact = stabilizers[0]
    env = config.make_env(config.motion_limits)
    goals = sample_goals(
        int(config.evaluation["nu_sweep_goals"]),
        env.limits.workspace,
        config.min_goal_distance,
        make_rng(config.seed, "goals"),
        env.start,
    )
    sweep = run_nu_sweep(
        goals,
        BenchmarkController(artifact.q_table),
        artifact.critic,
        nu_values,
        env,
        config.stage_cost_weights,
        config.stabilizer_params,
    )
    return write_csv(nu_sweep_frame(sweep), config.output_dir / "nu_sweep.csv", header)


# =================================================================
# EXPORT
# =================================================================


def cmd_export(artifact_path: Path) -> Path:
    """Print a readable artifact summary and write it next to the artifact."""
    artifact_path = Path(artifact_path)
    summary = summarize_artifact(load_artifact(artifact_path))
    print(dump_yaml(summary))
    return write_yaml(summary, artifact_path.with_suffix(".dump.yaml"))


def main(argv: Optional[Sequence[str]] = None):
    """
    Main execution function for the goal-reaching pipeline.
    """
    args = parse_arguments(argv)

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
        logger.info("Verbose logging enabled")

    logger.info("=" * 60)
    logger.info(f"GOAL-REACHING CONTROLLER: {args.command.upper()}")
    logger.info("=" * 60)

    try:
        config = RunConfig(args.config, build_overrides(args))
    except (ConfigurationError, FileNotFoundError) as e:
        logger.error(str(e))
        sys.exit(EXIT_CONFIG)

    try:
        if args.command == "train":
            cmd_train(config)
        elif args.command == "refine":
            cmd_refine(config, args.benchmark)
        elif args.command == "eval":
            cmd_eval(config, args.artifacts, args.goals, nu_sweep=args.nu_sweep is not None)
        elif args.command == "export":
            cmd_export(args.artifact)
    except ConfigurationError as e:
        logger.error(str(e))
        sys.exit(EXIT_CONFIG)
    except (ArtifactError, FileNotFoundError) as e:
        logger.error(f"Artifact error: {e}")
        sys.exit(EXIT_ARTIFACT)
    except Exception as e:
        logger.error(f"Error during {args.command}: {str(e)}")
        if args.verbose:
            import traceback

            logger.error(f"Full traceback:\n{traceback.format_exc()}")
        sys.exit(EXIT_RUNTIME)

    logger.info(f"\n{'=' * 60}")
    logger.info(f"{args.command.upper()} COMPLETED SUCCESSFULLY")
    logger.info(f"{'=' * 60}")


if __name__ == "__main__":
    main()
