"""
CSV and YAML exports of training, refinement and evaluation results.

Every CSV starts with `# key: value` provenance lines; read them back with
`read_csv`.
"""

from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

import numpy as np
import pandas as pd
import yaml

from goal_reaching.simulation.reward import REWARD_TERMS
from goal_reaching.utils.utils import setup_logging

logger = setup_logging(__name__)

EPISODE_COLUMNS = [
    "policy",
    "episode",
    "segment",
    "goal_x",
    "goal_y",
    "goal_mode",
    "outcome",
    "steps",
    "final_distance",
    "fallback_count",
    "effort",
]


def _ensure_parent(path: Union[str, Path]) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    return out_path


def write_csv(frame: pd.DataFrame, path: Union[str, Path], header: Mapping) -> Path:
    """Write `frame` after one `# key: value` line per header entry."""
    out = _ensure_parent(path)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        for key, value in header.items():
            fh.write(f"# {key}: {value}\n")
        frame.to_csv(fh, index=False, float_format="%.10g")
    logger.debug(f"Wrote {len(frame)} rows to {out}")
    return out


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def read_header(path: Union[str, Path]) -> Dict[str, str]:
    header = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].rstrip("\n").partition(": ")
            header[key] = value
    return header


def episodes_frame(records_by_policy: Mapping[str, Sequence]) -> pd.DataFrame:
    rows = []
    for policy_id, records in records_by_policy.items():
        for episode, record in enumerate(records):
            rows.append(
                {
                    "policy": policy_id,
                    "episode": episode,
                    "segment": record.segment,
                    "goal_x": record.goal.x_g,
                    "goal_y": record.goal.y_g,
                    "goal_mode": record.goal.mode.value,
                    "outcome": record.outcome.value,
                    "steps": record.steps,
                    "final_distance": record.final_distance,
                    "fallback_count": record.fallback_count,
                    "effort": record.effort,
                }
            )
    return pd.DataFrame(rows, columns=EPISODE_COLUMNS)


def export_trajectories(
    records_by_policy: Mapping[str, Sequence],
    out_dir: Union[str, Path],
    header: Mapping,
) -> List[Path]:
    """One CSV per (policy, episode) with the full per-step trajectory."""
    written = []
    for policy_id, records in records_by_policy.items():
        for episode, record in enumerate(records):
            path = Path(out_dir) / f"{policy_id}_episode_{episode:04d}.csv"
            written.append(write_csv(record.trajectory_frame(), path, header))
    logger.info(f"Exported {len(written)} trajectories to {out_dir}")
    return written


def reward_audit_frame(record) -> pd.DataFrame:
    """Per-step reward terms of one record evaluated with reward recording."""
    if record.rewards is None:
        raise ValueError("Record was produced without reward recording")
    frame = pd.DataFrame(record.rewards, columns=list(REWARD_TERMS))
    frame.insert(0, "step", np.arange(len(frame)))
    frame["total"] = record.rewards.sum(axis=1)
    return frame


def export_reward_audit(
    records_by_policy: Mapping[str, Sequence],
    out_dir: Union[str, Path],
    header: Mapping,
) -> List[Path]:
    written = []
    for policy_id, records in records_by_policy.items():
        for episode, record in enumerate(records):
            path = Path(out_dir) / f"{policy_id}_episode_{episode:04d}.csv"
            written.append(write_csv(reward_audit_frame(record), path, header))
    logger.info(f"Exported reward audits for {len(written)} episodes to {out_dir}")
    return written


def nu_sweep_frame(sweep: Mapping[float, Sequence]) -> pd.DataFrame:
    """Overlay table: every trajectory sample tagged with its nu_bar and goal index."""
    frames = []
    for nu_bar, records in sweep.items():
        for goal_index, record in enumerate(records):
            frame = record.trajectory_frame()
            frame.insert(0, "goal_index", goal_index)
            frame.insert(0, "nu_bar", nu_bar)
            frame["outcome"] = record.outcome.value
            frames.append(frame)
    if not frames:
        return pd.DataFrame()
    return pd.concat(frames, ignore_index=True)


def write_yaml(data: Dict, path: Union[str, Path]) -> Path:
    out = _ensure_parent(path)
    with open(out, "w", encoding="utf-8") as fh:
        yaml.safe_dump(_plain(data), fh, sort_keys=False, default_flow_style=False)
    return out


def _plain(value):
    """Convert numpy scalars and tuples so yaml.safe_dump accepts them."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def dump_yaml(data: Dict) -> str:
    return yaml.safe_dump(_plain(data), sort_keys=False, default_flow_style=False)

