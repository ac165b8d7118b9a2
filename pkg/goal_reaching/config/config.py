import copy
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from goal_reaching.agents.benchmark_learner import TrainConfig, UpdateRule
from goal_reaching.agents.stabilizer import StabilizerParams, StageCostWeights
from goal_reaching.simulation.environment import GoalReachingEnv, RuleMode, RuleParams
from goal_reaching.simulation.kinematics import MotionLimits, RobotState, Workspace
from goal_reaching.simulation.reward import RewardWeights, ShapingMode
from goal_reaching.simulation.statespace import ActionGrid, BinningConfig
from goal_reaching.utils.utils import setup_logging

logger = setup_logging(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent / "config.yaml"


class ConfigurationError(ValueError):
    """Invalid run configuration; the message lists every offending field."""

    def __init__(self, problems: List[str]):
        self.problems = problems
        super().__init__(
            "Invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems)
        )


def _deep_merge(base: Dict, updates: Dict, problems: List[str], prefix: str = "") -> Dict:
    merged = copy.deepcopy(base)
    for key, value in updates.items():
        name = f"{prefix}{key}"
        if key not in base:
            problems.append(f"{name}: unknown key")
        elif isinstance(base[key], dict) and not isinstance(value, dict):
            problems.append(f"{name}: expected a section, got {value!r}")
        elif isinstance(base[key], dict):
            merged[key] = _deep_merge(base[key], value, problems, f"{name}.")
        else:
            merged[key] = value
    return merged


class RunConfig:
    """
    Run Configuration
    =================

    Loads the YAML run configuration, merges it over the shipped defaults,
    applies command-line overrides and validates every field before any
    computation starts. Typed domain objects are exposed as properties.

    Usage:
        >>> config = RunConfig()
        >>> env = config.make_env(config.train_motion_limits)
        >>> train_cfg = config.train_config

    Configuration Structure:
        - benchmark: Benchmark RL parameters (training timing, bins, limits, TD)
        - stabilizer: Critic refinement and rollout parameters
        - reward: Reward gains and shaping mode
        - episode: Horizon and start state
        - moving_goal: Drifting-goal scenario
        - evaluation: Matched-evaluation settings and exports
        - run: Seed, output directory, logging interval

    Raises:
        FileNotFoundError: If the configuration file does not exist
        ConfigurationError: If any field is unknown, missing or out of range
    """

    def __init__(
        self,
        config_path: Optional[Union[str, Path]] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ):
        self.config_path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH
        problems: List[str] = []

        defaults = self._read_yaml(DEFAULT_CONFIG_PATH)
        user = self._read_yaml(self.config_path)
        self.config = _deep_merge(defaults, user, problems)

        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            section, _, key = dotted.partition(".")
            if section not in self.config or key not in self.config[section]:
                problems.append(f"{dotted}: unknown override")
                continue
            self.config[section][key] = value

        if problems:
            raise ConfigurationError(problems)

        self._validate_config()
        logger.debug(f"Configuration loaded from {self.config_path}")
        logger.debug(f"Configuration hash: {self.config_hash}")

    @staticmethod
    def _read_yaml(path: Path) -> Dict:
        if not path.exists():
            raise FileNotFoundError(f"Configuration file not found: {path}")
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigurationError([f"{path}: top level must be a mapping"])
        return data

    @classmethod
    def from_dict(cls, data: Dict, path: Union[str, Path]) -> "RunConfig":
        """Write `data` to `path` and load it as a configuration."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.safe_dump(data, f, sort_keys=False)
        return cls(path)

    # =================================================================
    # VALIDATION
    # =================================================================

    def _validate_config(self):
        """
        Validate field types and ranges, collecting every problem before raising.

        Domain objects are built once here so their own consistency checks
        (ordered bounds, timing multiples, grid levels) are reported too.
        """
        problems: List[str] = []
        b = self.config["benchmark"]
        s = self.config["stabilizer"]

        def number(section: str, key: str, low: float = -math.inf, high: float = math.inf,
                   low_open: bool = False):
            value = self.config[section][key]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                problems.append(f"{section}.{key}: expected a number, got {value!r}")
                return
            if not math.isfinite(value) or value < low or value > high or (low_open and value == low):
                bracket = "(" if low_open else "["
                problems.append(f"{section}.{key}: {value} outside {bracket}{low}, {high}]")

        def pair(section: str, key: str):
            value = self.config[section][key]
            if (
                not isinstance(value, (list, tuple))
                or len(value) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
            ):
                problems.append(f"{section}.{key}: expected [low, high], got {value!r}")
            elif value[0] > value[1]:
                problems.append(f"{section}.{key}: low {value[0]} > high {value[1]}")

        def integer(section: str, key: str, low: int = 0):
            value = self.config[section][key]
            if isinstance(value, bool) or not isinstance(value, int) or value < low:
                problems.append(f"{section}.{key}: expected an integer >= {low}, got {value!r}")

        def choice(section: str, key: str, options: Tuple[str, ...]):
            value = self.config[section][key]
            if value not in options:
                problems.append(f"{section}.{key}: expected one of {options}, got {value!r}")

        # benchmark
        number("benchmark", "dt", 0.0, low_open=True)
        integer("benchmark", "episodes")
        integer("benchmark", "evalEpisodes", 1)
        number("benchmark", "goalTol", 0.0, low_open=True)
        number("benchmark", "startMinDistToGoal", 0.0)
        number("benchmark", "grid_resolution", 0.0, low_open=True)
        for key in ("n_theta", "N_v", "N_omega"):
            integer("benchmark", key, 1)
        for key in ("xy_bounds", "v_bounds", "omega_bounds", "a_v_bounds", "a_omega_bounds"):
            pair("benchmark", key)
        for key in ("e_db", "omega_db"):
            number("benchmark", key, 0.0, low_open=True)
        for key in ("k_ws", "e_lock", "d_lock"):
            number("benchmark", key, 0.0)
        number("benchmark", "alpha", 0.0, 1.0, low_open=True)
        number("benchmark", "gamma", 0.0, 1.0)
        if b["gamma"] == 1.0:
            problems.append("benchmark.gamma: must be < 1")
        epsilon = b["epsilon"]
        if not isinstance(epsilon, (list, tuple)) or len(epsilon) != 2:
            problems.append(f"benchmark.epsilon: expected [eps0, eps_final], got {epsilon!r}")
        choice("benchmark", "rule", tuple(r.value for r in UpdateRule))
        acc_grid = b["acc_grid"]
        if not isinstance(acc_grid, (list, tuple)) or len(acc_grid) != 2:
            problems.append(f"benchmark.acc_grid: expected [step_a_v, step_a_omega], got {acc_grid!r}")

        # stabilizer
        integer("stabilizer", "episodes")
        number("stabilizer", "alpha_crit", 0.0, 1.0, low_open=True)
        number("stabilizer", "gamma", 0.0, 1.0)
        number("stabilizer", "nu_bar", 0.0, low_open=True)
        number("stabilizer", "C_low", 0.0, low_open=True)
        number("stabilizer", "C_up", 0.0, low_open=True)
        for key in ("dt_policy", "dt_sim", "d_scale"):
            number("stabilizer", key, 0.0, low_open=True)
        for key in ("w_d", "w_e", "w_u"):
            number("stabilizer", key, 0.0)
        if not isinstance(s["knowledge_transfer"], bool):
            problems.append(f"stabilizer.knowledge_transfer: expected true/false, got {s['knowledge_transfer']!r}")
        choice("stabilizer", "rule_mode", tuple(m.value for m in RuleMode))

        # reward
        for key, value in self.config["reward"].items():
            if key == "shaping_mode":
                choice("reward", key, tuple(m.value for m in ShapingMode))
            else:
                number("reward", key, 0.0)

        # episode, moving goal, evaluation, run
        integer("episode", "max_steps", 1)
        for key in ("x", "y", "theta", "v", "omega"):
            value = self.config["episode"]["start"].get(key)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                problems.append(f"episode.start.{key}: expected a number, got {value!r}")
        integer("moving_goal", "n_goals", 1)
        number("moving_goal", "speed_fraction", 0.0, 1.0)
        if self.config["moving_goal"]["speed_fraction"] == 1.0:
            problems.append("moving_goal.speed_fraction: goal must be slower than v_max")
        number("moving_goal", "heading_noise", 0.0)
        integer("evaluation", "goals", 1)
        choice("evaluation", "mode", ("static", "moving"))
        integer("evaluation", "nu_sweep_goals", 1)
        nu_values = self.config["evaluation"]["nu_sweep"]
        if not isinstance(nu_values, (list, tuple)) or not nu_values or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in nu_values
        ):
            problems.append(f"evaluation.nu_sweep: expected a list of positive numbers, got {nu_values!r}")
        heatmap_slice = self.config["evaluation"]["heatmap_slice"]
        if heatmap_slice != "auto" and not (
            isinstance(heatmap_slice, (list, tuple)) and len(heatmap_slice) == 2
        ):
            problems.append(f"evaluation.heatmap_slice: expected 'auto' or [i_v, i_omega], got {heatmap_slice!r}")
        for key in ("export_heatmaps", "export_trajectories", "export_reward_audit"):
            if not isinstance(self.config["evaluation"][key], bool):
                problems.append(f"evaluation.{key}: expected true/false")
        integer("run", "seed")
        integer("run", "log_every")

        if problems:
            raise ConfigurationError(problems)

        # Domain-level checks
        for name in (
            "motion_limits",
            "train_motion_limits",
            "binning",
            "action_grid",
            "reward_weights",
            "train_config",
            "stage_cost_weights",
            "stabilizer_params",
        ):
            try:
                getattr(self, name)
            except (ValueError, TypeError) as e:
                problems.append(f"{name}: {e}")
        if not self.workspace.contains(self.start_state.x, self.start_state.y):
            problems.append("episode.start: start position lies outside the workspace")

        if problems:
            raise ConfigurationError(problems)

    # =================================================================
    # DOMAIN OBJECTS
    # =================================================================

    @property
    def workspace(self) -> Workspace:
        low, high = self.config["benchmark"]["xy_bounds"]
        return Workspace(float(low), float(high), float(low), float(high))

    def _limits(self, dt_policy: float, dt_sim: float) -> MotionLimits:
        b = self.config["benchmark"]
        return MotionLimits(
            v_min=float(b["v_bounds"][0]),
            v_max=float(b["v_bounds"][1]),
            omega_min=float(b["omega_bounds"][0]),
            omega_max=float(b["omega_bounds"][1]),
            a_v_min=float(b["a_v_bounds"][0]),
            a_v_max=float(b["a_v_bounds"][1]),
            a_omega_min=float(b["a_omega_bounds"][0]),
            a_omega_max=float(b["a_omega_bounds"][1]),
            workspace=self.workspace,
            dt_policy=float(dt_policy),
            dt_sim=float(dt_sim),
        )

    @property
    def motion_limits(self) -> MotionLimits:
        """Limits with refinement/evaluation substepping."""
        s = self.config["stabilizer"]
        return self._limits(s["dt_policy"], s["dt_sim"])

    @property
    def train_motion_limits(self) -> MotionLimits:
        """Limits with single-step training integration."""
        dt = self.config["benchmark"]["dt"]
        return self._limits(dt, dt)

    @property
    def start_state(self) -> RobotState:
        start = self.config["episode"]["start"]
        return RobotState(*(float(start[k]) for k in ("x", "y", "theta", "v", "omega")))

    @property
    def binning(self) -> BinningConfig:
        b = self.config["benchmark"]
        return BinningConfig.from_resolution(
            workspace=self.workspace,
            start=(self.start_state.x, self.start_state.y),
            resolution=float(b["grid_resolution"]),
            n_theta=int(b["n_theta"]),
            n_v=int(b["N_v"]),
            v_range=tuple(b["v_bounds"]),
            n_omega=int(b["N_omega"]),
            omega_range=tuple(b["omega_bounds"]),
        )

    @property
    def action_grid(self) -> ActionGrid:
        b = self.config["benchmark"]
        return ActionGrid.from_ranges(
            tuple(b["a_v_bounds"]),
            float(b["acc_grid"][0]),
            tuple(b["a_omega_bounds"]),
            float(b["acc_grid"][1]),
        )

    @property
    def reward_weights(self) -> RewardWeights:
        b = self.config["benchmark"]
        r = dict(self.config["reward"])
        mode = ShapingMode(r.pop("shaping_mode"))
        return RewardWeights(
            **{k: float(v) for k, v in r.items()},
            k_ws=float(b["k_ws"]),
            w_db=float(b["omega_db"]),
            e_db=float(b["e_db"]),
            d_goalTol=float(b["goalTol"]),
            gamma=float(b["gamma"]),
            shaping_mode=mode,
        )

    @property
    def rule_params(self) -> RuleParams:
        b = self.config["benchmark"]
        return RuleParams(
            e_db=float(b["e_db"]),
            omega_db=float(b["omega_db"]),
            e_lock=float(b["e_lock"]),
            d_lock=float(b["d_lock"]),
        )

    @property
    def train_config(self) -> TrainConfig:
        b = self.config["benchmark"]
        return TrainConfig(
            episodes=int(b["episodes"]),
            alpha=float(b["alpha"]),
            gamma=float(b["gamma"]),
            eps0=float(b["epsilon"][0]),
            eps_final=float(b["epsilon"][1]),
            rule=UpdateRule(b["rule"]),
            seed=self.seed,
            min_goal_distance=float(b["startMinDistToGoal"]),
            log_every=self.log_every,
        )

    @property
    def eval_episodes(self) -> int:
        """Fresh-goal greedy episodes scored right after training."""
        return int(self.config["benchmark"]["evalEpisodes"])

    @property
    def stage_cost_weights(self) -> StageCostWeights:
        s = self.config["stabilizer"]
        return StageCostWeights(
            w_d=float(s["w_d"]),
            w_e=float(s["w_e"]),
            w_u=float(s["w_u"]),
            d_scale=float(s["d_scale"]),
        )

    @property
    def stabilizer_params(self) -> StabilizerParams:
        s = self.config["stabilizer"]
        return StabilizerParams(
            episodes=int(s["episodes"]),
            alpha_crit=float(s["alpha_crit"]),
            gamma=float(s["gamma"]),
            nu_bar=float(s["nu_bar"]),
            c_min=float(s["C_low"]),
            c_max=float(s["C_up"]),
            knowledge_transfer=bool(s["knowledge_transfer"]),
            rule_mode=RuleMode(s["rule_mode"]),
        )

    def make_env(self, limits: MotionLimits) -> GoalReachingEnv:
        return GoalReachingEnv(
            limits=limits,
            binning=self.binning,
            grid=self.action_grid,
            weights=self.reward_weights,
            rules=self.rule_params,
            max_steps=self.max_steps,
            goal_tolerance=self.goal_tolerance,
            start=self.start_state,
            heading_noise=float(self.config["moving_goal"]["heading_noise"]),
        )

    # =================================================================
    # RUN SETTINGS
    # =================================================================

    @property
    def seed(self) -> int:
        return int(self.config["run"]["seed"])

    @property
    def output_dir(self) -> Path:
        return Path(self.config["run"]["output_dir"])

    @property
    def log_every(self) -> int:
        return int(self.config["run"]["log_every"])

    @property
    def max_steps(self) -> int:
        return int(self.config["episode"]["max_steps"])

    @property
    def goal_tolerance(self) -> float:
        return float(self.config["benchmark"]["goalTol"])

    @property
    def min_goal_distance(self) -> float:
        return float(self.config["benchmark"]["startMinDistToGoal"])

    @property
    def evaluation(self) -> Dict:
        return self.config["evaluation"]

    @property
    def moving_goal(self) -> Dict:
        return self.config["moving_goal"]

    @property
    def heatmap_slice(self) -> Optional[Tuple[int, int]]:
        value = self.config["evaluation"]["heatmap_slice"]
        return None if value == "auto" else (int(value[0]), int(value[1]))

    # =================================================================
    # SERIALIZATION
    # =================================================================

    def to_dict(self) -> Dict:
        return copy.deepcopy(self.config)

    @property
    def config_hash(self) -> str:
        config_str = json.dumps(self.config, sort_keys=True, default=str)
        return hashlib.sha256(config_str.encode()).hexdigest()

    def save(self, path: Union[str, Path]) -> Path:
        """Write the merged configuration; loading it reproduces `config_hash`."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write(f"# config_hash: {self.config_hash}\n")
            yaml.safe_dump(self.config, f, sort_keys=False)
        logger.info(f"Saved run configuration to {path}")
        return path
