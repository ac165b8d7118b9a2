import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Tuple

import numpy as np

from goal_reaching.simulation.kinematics import Workspace


def _bin_index(value: float, lower: float, upper: float, n_bins: int) -> int:
    """Uniform bin index with clamping; the upper boundary maps to the last bin."""
    if n_bins == 1 or upper <= lower:
        return 0
    fraction = (min(max(value, lower), upper) - lower) / (upper - lower)
    return min(int(math.floor(fraction * n_bins)), n_bins - 1)


@dataclass(frozen=True)
class BinningConfig:
    """
    Uniform partition of the four state features.

    Distance covers [0, d_max], heading error [-pi, pi), and the speeds their
    motion-limit ranges.
    """

    n_d: int
    d_max: float
    n_theta: int
    n_v: int
    v_range: Tuple[float, float]
    n_omega: int
    omega_range: Tuple[float, float]

    def __post_init__(self):
        counts = {
            "n_d": self.n_d,
            "n_theta": self.n_theta,
            "n_v": self.n_v,
            "n_omega": self.n_omega,
        }
        bad = [f"{name}={value}" for name, value in counts.items() if value < 1]
        if bad:
            raise ValueError(f"Bin counts must be >= 1, got {', '.join(bad)}")
        if self.d_max <= 0:
            raise ValueError(f"d_max must be positive, got {self.d_max}")

    @classmethod
    def from_resolution(
        cls,
        workspace: Workspace,
        start: Tuple[float, float],
        resolution: float,
        n_theta: int,
        n_v: int,
        v_range: Tuple[float, float],
        n_omega: int,
        omega_range: Tuple[float, float],
    ) -> "BinningConfig":
        """
        Distance bins of width `resolution` covering the farthest reachable goal.

        With the origin start and [-25, 25] bounds this yields d_max = 36 and
        36 bins of 1 m.
        """
        reach = workspace.max_distance_from(*start)
        n_d = max(1, int(math.ceil(reach / resolution - 1e-9)))
        return cls(
            n_d=n_d,
            d_max=n_d * resolution,
            n_theta=n_theta,
            n_v=n_v,
            v_range=(float(v_range[0]), float(v_range[1])),
            n_omega=n_omega,
            omega_range=(float(omega_range[0]), float(omega_range[1])),
        )

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return (self.n_d, self.n_theta, self.n_v, self.n_omega)

    @property
    def cardinality(self) -> int:
        return self.n_d * self.n_theta * self.n_v * self.n_omega

    def bin_centers(self, axis: str) -> np.ndarray:
        """Centers of the bins along 'd', 'e', 'v' or 'omega'."""
        lower, upper, n = {
            "d": (0.0, self.d_max, self.n_d),
            "e": (-math.pi, math.pi, self.n_theta),
            "v": (*self.v_range, self.n_v),
            "omega": (*self.omega_range, self.n_omega),
        }[axis]
        width = (upper - lower) / n
        return lower + width * (np.arange(n) + 0.5)

    def signature(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class DiscreteState:
    i_d: int
    i_e: int
    i_v: int
    i_omega: int
    packed: int


@dataclass(frozen=True)
class ActionGrid:
    """Finite acceleration grid; the action set is the Cartesian product of both axes."""

    a_v_levels: Tuple[float, ...]
    a_omega_levels: Tuple[float, ...]

    def __post_init__(self):
        for name, levels in (
            ("a_v_levels", self.a_v_levels),
            ("a_omega_levels", self.a_omega_levels),
        ):
            if len(levels) == 0:
                raise ValueError(f"{name} must not be empty")
            if list(levels) != sorted(levels):
                raise ValueError(f"{name} must be ordered, got {levels}")
            if sum(1 for level in levels if level == 0.0) != 1:
                raise ValueError(f"{name} must contain 0 exactly once, got {levels}")

    @classmethod
    def from_ranges(
        cls,
        a_v_range: Tuple[float, float],
        a_v_step: float,
        a_omega_range: Tuple[float, float],
        a_omega_step: float,
    ) -> "ActionGrid":
        return cls(
            a_v_levels=_levels(a_v_range, a_v_step),
            a_omega_levels=_levels(a_omega_range, a_omega_step),
        )

    @property
    def n_actions(self) -> int:
        return len(self.a_v_levels) * len(self.a_omega_levels)

    def action(self, index: int) -> Tuple[float, float]:
        i_v, i_omega = divmod(index, len(self.a_omega_levels))
        return self.a_v_levels[i_v], self.a_omega_levels[i_omega]

    def signature(self) -> Dict:
        return {
            "a_v_levels": list(self.a_v_levels),
            "a_omega_levels": list(self.a_omega_levels),
        }


def _levels(bounds: Tuple[float, float], step_size: float) -> Tuple[float, ...]:
    lower, upper = float(bounds[0]), float(bounds[1])
    if upper < lower:
        raise ValueError(f"Acceleration range [{lower}, {upper}] is inverted")
    if upper == lower or step_size <= 0:
        return (lower,)
    n = int(round((upper - lower) / step_size)) + 1
    levels = np.linspace(lower, upper, n)
    levels[np.isclose(levels, 0.0, atol=1e-12)] = 0.0
    return tuple(float(level) for level in levels)


def quantize(
    d: float, e: float, v: float, omega: float, cfg: BinningConfig
) -> DiscreteState:
    """Map continuous features to their bin indices and packed label."""
    i_d = _bin_index(d, 0.0, cfg.d_max, cfg.n_d)
    i_e = _bin_index(e, -math.pi, math.pi, cfg.n_theta)
    i_v = _bin_index(v, cfg.v_range[0], cfg.v_range[1], cfg.n_v)
    i_omega = _bin_index(omega, cfg.omega_range[0], cfg.omega_range[1], cfg.n_omega)
    return DiscreteState(
        i_d, i_e, i_v, i_omega, _pack_indices(i_d, i_e, i_v, i_omega, cfg)
    )


def _bin_indices(values: np.ndarray, lower: float, upper: float, n_bins: int) -> np.ndarray:
    if n_bins == 1 or upper <= lower:
        return np.zeros(len(values), dtype=np.int64)
    fraction = (np.clip(values, lower, upper) - lower) / (upper - lower)
    return np.minimum(np.floor(fraction * n_bins).astype(np.int64), n_bins - 1)


def quantize_many(
    d: np.ndarray, e: np.ndarray, v: np.ndarray, omega: np.ndarray, cfg: BinningConfig
) -> np.ndarray:
    """Vectorized `quantize`; returns an (N, 4) array of bin indices."""
    return np.column_stack(
        [
            _bin_indices(np.asarray(d, dtype=float), 0.0, cfg.d_max, cfg.n_d),
            _bin_indices(np.asarray(e, dtype=float), -math.pi, math.pi, cfg.n_theta),
            _bin_indices(np.asarray(v, dtype=float), *cfg.v_range, cfg.n_v),
            _bin_indices(np.asarray(omega, dtype=float), *cfg.omega_range, cfg.n_omega),
        ]
    )


def _pack_indices(i_d: int, i_e: int, i_v: int, i_omega: int, cfg: BinningConfig) -> int:
    return ((i_d * cfg.n_theta + i_e) * cfg.n_v + i_v) * cfg.n_omega + i_omega


def pack(ds: DiscreteState, cfg: BinningConfig) -> int:
    """Row-major mixed-radix label of the index tuple."""
    for value, bound, name in zip(
        (ds.i_d, ds.i_e, ds.i_v, ds.i_omega), cfg.shape, ("i_d", "i_e", "i_v", "i_omega")
    ):
        if not 0 <= value < bound:
            raise ValueError(f"{name}={value} outside [0, {bound})")
    return _pack_indices(ds.i_d, ds.i_e, ds.i_v, ds.i_omega, cfg)


def unpack(label: int, cfg: BinningConfig) -> DiscreteState:
    if not 0 <= label < cfg.cardinality:
        raise ValueError(f"State label {label} outside [0, {cfg.cardinality})")
    rest, i_omega = divmod(int(label), cfg.n_omega)
    rest, i_v = divmod(rest, cfg.n_v)
    i_d, i_e = divmod(rest, cfg.n_theta)
    return DiscreteState(i_d, i_e, i_v, i_omega, int(label))


def enumerate_actions(grid: ActionGrid) -> List[Tuple[float, float]]:
    """All (a_v, a_omega) pairs, a_v varying slowest."""
    return [(a_v, a_omega) for a_v in grid.a_v_levels for a_omega in grid.a_omega_levels]
