"""
HDF5 policy artifacts.

An artifact is self-describing: it carries the state binning, the action grid,
the benchmark table and optionally the stabilizer critic with its refinement
ledger, plus provenance and the merged run configuration. The format version
is checked before any dataset is read.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import h5py
import numpy as np
import pandas as pd

from goal_reaching.agents.benchmark_learner import QTable
from goal_reaching.agents.stabilizer import CriticState
from goal_reaching.simulation.statespace import ActionGrid, BinningConfig
from goal_reaching.utils.utils import setup_logging

logger = setup_logging(__name__)

FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)


class ArtifactError(ValueError):
    """Unreadable, incompatible or mismatching policy artifact."""


@dataclass
class PolicyArtifact:
    """
    Trained tables and everything needed to use them.

    Attributes:
        binning: State discretization the tables are indexed by
        grid: Action grid the tables are indexed by
        q_table: Benchmark action values
        critic: Refined stabilizer critic, if any
        ledger: Per-episode refinement ledger, if any
        provenance: Rule, episode counts, seed, config hash and notes
        config: Merged run configuration that produced the artifact
    """

    binning: BinningConfig
    grid: ActionGrid
    q_table: QTable
    critic: Optional[CriticState] = None
    ledger: Optional[pd.DataFrame] = None
    provenance: Dict = field(default_factory=dict)
    config: Dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def kind(self) -> str:
        return "stabilizer" if self.critic is not None else "benchmark"

    def space_signature(self) -> Dict:
        return {"binning": self.binning.signature(), "action_grid": self.grid.signature()}

    def content_hash(self) -> str:
        """SHA-256 over metadata and table contents; independent of file layout."""
        digest = hashlib.sha256()
        meta = {
            "format_version": self.format_version,
            "space": self.space_signature(),
            "provenance": self.provenance,
            "config": self.config,
        }
        digest.update(json.dumps(meta, sort_keys=True, default=str).encode())
        digest.update(np.ascontiguousarray(self.q_table.values).tobytes())
        if self.critic is not None:
            digest.update(np.ascontiguousarray(self.critic.w).tobytes())
            digest.update(
                json.dumps(_critic_attrs(self.critic), sort_keys=True).encode()
            )
        if self.ledger is not None:
            digest.update(self.ledger.to_csv(index=False).encode())
        return digest.hexdigest()


def _critic_attrs(critic: CriticState) -> Dict:
    return {
        "nu_bar": critic.nu_bar,
        "c_min": critic.c_min,
        "c_max": critic.c_max,
        "alpha_crit": critic.alpha_crit,
    }


def _dataset(group: h5py.Group, name: str, data: np.ndarray) -> None:
    if data.size == 0:
        # empty datasets cannot be chunked
        group.create_dataset(name, data=data, track_times=False)
        return
    group.create_dataset(
        name, data=data, compression="gzip", compression_opts=6, track_times=False
    )


def save_artifact(artifact: PolicyArtifact, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with h5py.File(path, "w") as f:
        f.attrs["format_version"] = artifact.format_version
        f.attrs["kind"] = artifact.kind
        f.attrs["binning"] = json.dumps(artifact.binning.signature(), sort_keys=True)
        f.attrs["action_grid"] = json.dumps(artifact.grid.signature(), sort_keys=True)
        f.attrs["provenance"] = json.dumps(artifact.provenance, sort_keys=True, default=str)
        f.attrs["config"] = json.dumps(artifact.config, sort_keys=True, default=str)

        _dataset(f, "q_table", artifact.q_table.values)

        if artifact.critic is not None:
            critic_group = f.create_group("critic")
            _dataset(critic_group, "w", artifact.critic.w)
            _dataset(critic_group, "phi_norms", artifact.critic.phi_norms)
            for key, value in _critic_attrs(artifact.critic).items():
                critic_group.attrs[key] = value

        if artifact.ledger is not None:
            ledger_group = f.create_group("ledger")
            for column in artifact.ledger.columns:
                values = artifact.ledger[column].to_numpy()
                if values.dtype == object:
                    values = np.array(values.astype(str), dtype=h5py.string_dtype())
                _dataset(ledger_group, column, values)
            ledger_group.attrs["columns"] = json.dumps(list(artifact.ledger.columns))

    logger.info(f"Saved {artifact.kind} artifact to {path}")
    return path


def read_format_version(path: Union[str, Path]) -> int:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Artifact not found: {path}")
    try:
        with h5py.File(path, "r") as f:
            return int(f.attrs.get("format_version", -1))
    except OSError as e:
        raise ArtifactError(f"Cannot open artifact {path}: {e}") from e


def load_artifact(path: Union[str, Path]) -> PolicyArtifact:
    """
    Load an artifact written by `save_artifact`.

    Raises:
        FileNotFoundError: If the file does not exist
        ArtifactError: On an unsupported format version or a malformed file
    """
    path = Path(path)
    version = read_format_version(path)
    if version not in SUPPORTED_VERSIONS:
        raise ArtifactError(
            f"Unsupported artifact format version {version} in {path}; "
            f"supported: {', '.join(str(v) for v in SUPPORTED_VERSIONS)}"
        )

    try:
        with h5py.File(path, "r") as f:
            binning_sig = json.loads(f.attrs["binning"])
            binning = BinningConfig(
                **{
                    **binning_sig,
                    "v_range": tuple(binning_sig["v_range"]),
                    "omega_range": tuple(binning_sig["omega_range"]),
                }
            )
            grid_sig = json.loads(f.attrs["action_grid"])
            grid = ActionGrid(
                a_v_levels=tuple(grid_sig["a_v_levels"]),
                a_omega_levels=tuple(grid_sig["a_omega_levels"]),
            )
            q_table = QTable(f["q_table"][:])

            critic = None
            if "critic" in f:
                group = f["critic"]
                critic = CriticState(
                    w=group["w"][:],
                    phi_norms=group["phi_norms"][:],
                    nu_bar=float(group.attrs["nu_bar"]),
                    c_min=float(group.attrs["c_min"]),
                    c_max=float(group.attrs["c_max"]),
                    alpha_crit=float(group.attrs["alpha_crit"]),
                )

            ledger = None
            if "ledger" in f:
                group = f["ledger"]
                columns = json.loads(group.attrs["columns"])
                data = {}
                for column in columns:
                    dataset = group[column]
                    if h5py.check_string_dtype(dataset.dtype) is not None:
                        data[column] = list(dataset.asstr()[:])
                    else:
                        data[column] = dataset[:]
                ledger = pd.DataFrame(data, columns=columns)

            provenance = json.loads(f.attrs["provenance"])
            config = json.loads(f.attrs["config"])
    except (KeyError, OSError, TypeError, ValueError) as e:
        raise ArtifactError(f"Malformed artifact {path}: {e}") from e

    artifact = PolicyArtifact(
        binning=binning,
        grid=grid,
        q_table=q_table,
        critic=critic,
        ledger=ledger,
        provenance=provenance,
        config=config,
        format_version=version,
    )
    expected = (binning.cardinality, grid.n_actions)
    if q_table.values.shape != expected or (
        critic is not None and critic.w.shape != expected
    ):
        raise ArtifactError(
            f"Table shapes in {path} do not match the stored spaces {expected}"
        )
    logger.info(f"Loaded {artifact.kind} artifact from {path}")
    return artifact


def check_space(
    artifact: PolicyArtifact, binning: BinningConfig, grid: ActionGrid
) -> None:
    """
    Raises:
        ArtifactError: If the artifact was built on different state or action spaces
    """
    expected = {"binning": binning.signature(), "action_grid": grid.signature()}
    found = artifact.space_signature()
    if json.dumps(found, sort_keys=True) != json.dumps(expected, sort_keys=True):
        raise ArtifactError(
            "Artifact spaces do not match the configuration\n"
            f"  artifact: {json.dumps(found, sort_keys=True)}\n"
            f"  config:   {json.dumps(expected, sort_keys=True)}"
        )


def _table_summary(values: np.ndarray) -> Dict:
    return {
        "shape": list(values.shape),
        "min": float(values.min()) if values.size else None,
        "max": float(values.max()) if values.size else None,
        "nonzero": int(np.count_nonzero(values)),
    }


def summarize_artifact(artifact: PolicyArtifact) -> Dict:
    """Human-readable summary: format, spaces, provenance and table statistics."""
    summary = {
        "format_version": artifact.format_version,
        "kind": artifact.kind,
        "content_hash": artifact.content_hash(),
        "config_hash": artifact.provenance.get("config_hash"),
        "provenance": artifact.provenance,
        "binning": artifact.binning.signature(),
        "action_grid": artifact.grid.signature(),
        "q_table": _table_summary(artifact.q_table.values),
        "config": artifact.config,
    }
    if artifact.critic is not None:
        summary["critic"] = {
            **_table_summary(artifact.critic.w),
            **_critic_attrs(artifact.critic),
        }
    if artifact.ledger is not None:
        summary["ledger"] = {
            "episodes": int(len(artifact.ledger)),
            "accepted_total": int(artifact.ledger["accepted"].sum()),
            "fallbacks_total": int(artifact.ledger["fallbacks"].sum()),
            "steps_total": int(artifact.ledger["steps"].sum()),
        }
    return summary
