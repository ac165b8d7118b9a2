"""
Visitation and cost-to-go grids over the (distance, heading-error) plane.

Each grid is one (i_v, i_omega) slice of the discrete state space. Exports are
long-format frames; the log10(count + 1) display transform is applied only
when a frame is produced.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from goal_reaching.agents.benchmark_learner import QTable
from goal_reaching.agents.stabilizer import CriticState
from goal_reaching.evaluation.statistics import TRAJECTORY_COLUMNS
from goal_reaching.simulation.statespace import BinningConfig, quantize_many
from goal_reaching.utils.utils import setup_logging

logger = setup_logging(__name__)

_FEATURES = [TRAJECTORY_COLUMNS.index(name) for name in ("d", "e", "v", "omega")]


@dataclass
class HeatmapGrid:
    """Cell values of shape (n_d, n_theta) for one velocity slice."""

    values: np.ndarray
    slice: Tuple[int, int]
    kind: str
    d_centers: np.ndarray
    e_centers: np.ndarray

    def to_frame(self, log_counts: Optional[bool] = None) -> pd.DataFrame:
        """Long-format grid; visit counts are log10(count + 1) transformed by default."""
        if log_counts is None:
            log_counts = self.kind == "visits"
        values = np.log10(self.values + 1.0) if log_counts else self.values
        i_d, i_e = np.meshgrid(
            np.arange(self.values.shape[0]), np.arange(self.values.shape[1]), indexing="ij"
        )
        return pd.DataFrame(
            {
                "i_d": i_d.ravel(),
                "i_e": i_e.ravel(),
                "d": self.d_centers[i_d.ravel()],
                "e": self.e_centers[i_e.ravel()],
                "i_v": self.slice[0],
                "i_omega": self.slice[1],
                "value": values.ravel(),
            }
        )


def visitation_counts(records: Sequence, binning: BinningConfig) -> np.ndarray:
    """Visit counts over the full discrete state space from pre-action samples."""
    counts = np.zeros(binning.shape, dtype=np.int64)
    for record in records:
        samples = record.trajectory[:-1, _FEATURES]
        if samples.size == 0:
            continue
        indices = quantize_many(samples[:, 0], samples[:, 1], samples[:, 2], samples[:, 3], binning)
        np.add.at(counts, tuple(indices.T), 1)
    return counts


def most_visited_slice(counts: np.ndarray) -> Tuple[int, int]:
    per_slice = counts.sum(axis=(0, 1))
    i_v, i_omega = np.unravel_index(int(np.argmax(per_slice)), per_slice.shape)
    return int(i_v), int(i_omega)


def _grid(values: np.ndarray, slice_: Tuple[int, int], kind: str, binning: BinningConfig) -> HeatmapGrid:
    return HeatmapGrid(
        values=values,
        slice=slice_,
        kind=kind,
        d_centers=binning.bin_centers("d"),
        e_centers=binning.bin_centers("e"),
    )


def visitation_heatmap(
    records: Sequence,
    binning: BinningConfig,
    slice_: Optional[Tuple[int, int]] = None,
) -> HeatmapGrid:
    """
    Visit counts per (i_d, i_e) cell within one (i_v, i_omega) slice.

    Without an explicit slice the one with the highest total count is used.
    """
    if len(records) == 0:
        raise ValueError("Visitation heatmap needs at least one record")
    counts = visitation_counts(records, binning)
    if slice_ is None:
        slice_ = most_visited_slice(counts)
        logger.info(
            f"Most visited slice: i_v={slice_[0]} (v~{binning.bin_centers('v')[slice_[0]]:.3f}), "
            f"i_omega={slice_[1]} (omega~{binning.bin_centers('omega')[slice_[1]]:.3f})"
        )
    return _grid(counts[:, :, slice_[0], slice_[1]].astype(float), slice_, "visits", binning)


def cost_to_go_maps(
    q0: QTable,
    critic: CriticState,
    binning: BinningConfig,
    slice_: Tuple[int, int],
) -> Tuple[HeatmapGrid, HeatmapGrid]:
    """
    Benchmark cost proxy -max_a Q0(s, a) and stabilizer cost min_a w(s, a) on one slice.

    Returns:
        (benchmark grid, stabilizer grid)
    """
    if q0.n_states != binning.cardinality or critic.w.shape[0] != binning.cardinality:
        raise ValueError("Tables do not match the binning cardinality")
    benchmark = (-q0.values.max(axis=1)).reshape(binning.shape)
    stabilizer = critic.w.min(axis=1).reshape(binning.shape)
    i_v, i_omega = slice_
    return (
        _grid(benchmark[:, :, i_v, i_omega], slice_, "benchmark_cost", binning),
        _grid(stabilizer[:, :, i_v, i_omega], slice_, "stabilizer_cost", binning),
    )
