"""Scene discretization, orientation binning and trajectory preprocessing.

Positions are continuous scene coordinates; the model works on discrete
tokens from an ``rows x cols x 5`` codebook (grid cell crossed with four
cardinal heading bins plus a static bin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError

ORIENT_EAST = 0
ORIENT_NORTH = 1
ORIENT_WEST = 2
ORIENT_SOUTH = 3
ORIENT_STATIC = 4
N_ORIENT_BINS = 5

ORIENT_NAMES = ("east", "north", "west", "south", "static")


@dataclass(frozen=True)
class Codebook:
    """Discretization of the scene into position/orientation tokens.

    bounds is (min_x, min_y, max_x, max_y) in scene units. An agent moving
    slower than ``static_speed_threshold`` always lands in the static bin.
    """

    rows: int
    cols: int
    bounds: tuple[float, float, float, float]
    static_speed_threshold: float = 0.1

    @property
    def size(self) -> int:
        """Vocabulary size V = rows * cols * 5."""
        return self.rows * self.cols * N_ORIENT_BINS

    def contains(self, position) -> bool:
        x, y = float(position[0]), float(position[1])
        x0, y0, x1, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1

    def grid_cell(self, position) -> tuple[int, int]:
        """(row, col) of a position; out-of-bounds positions are clamped."""
        x0, y0, x1, y1 = self.bounds
        col = int((float(position[0]) - x0) / (x1 - x0) * self.cols)
        row = int((float(position[1]) - y0) / (y1 - y0) * self.rows)
        return min(max(row, 0), self.rows - 1), min(max(col, 0), self.cols - 1)

    def cell_index(self, position, velocity) -> int:
        """Flattened token of a (position, velocity) pair, clamping to bounds."""
        row, col = self.grid_cell(position)
        ob = orientation_bin(velocity, self.static_speed_threshold)
        return (row * self.cols + col) * N_ORIENT_BINS + ob

    def cell_components(self, cell: int) -> tuple[int, int, int]:
        """Inverse of cell_index: (row, col, orientation bin)."""
        ob = cell % N_ORIENT_BINS
        rc = cell // N_ORIENT_BINS
        return rc // self.cols, rc % self.cols, ob


def build_codebook(rows: int, cols: int, bounds, static_threshold: float = 0.1) -> Codebook:
    """Validate the grid configuration and return a Codebook."""
    if rows < 1 or cols < 1:
        raise InvalidInputError(f"grid must be at least 1x1, got {rows}x{cols}")
    x0, y0, x1, y1 = (float(v) for v in bounds)
    if not (x1 > x0 and y1 > y0):
        raise InvalidInputError(f"degenerate scene bounds {bounds!r}")
    if static_threshold < 0:
        raise InvalidInputError("static speed threshold must be >= 0")
    return Codebook(int(rows), int(cols), (x0, y0, x1, y1), float(static_threshold))


def orientation_bin(velocity, static_threshold: float) -> int:
    """Map a velocity to one of the five orientation bins.

    The four moving bins are the 90-degree sectors centred on +x, +y, -x
    and -y. A velocity exactly on a 45-degree boundary goes to the
    lower-indexed of the two adjacent bins, so every velocity maps to
    exactly one bin. Zero velocity with a zero threshold falls back to east.
    """
    vx, vy = float(velocity[0]), float(velocity[1])
    if math.hypot(vx, vy) < static_threshold:
        return ORIENT_STATIC
    ax, ay = abs(vx), abs(vy)
    if vx > 0 and vx >= ay:
        return ORIENT_EAST
    if vy > 0 and vy >= ax:
        return ORIENT_NORTH
    if vx < 0 and -vx >= ay:
        return ORIENT_WEST
    if vy < 0 and -vy >= ax:
        return ORIENT_SOUTH
    return ORIENT_EAST


def tokenize(position, velocity, cb: Codebook) -> int:
    """Token of one (position, velocity) observation under a codebook."""
    return cb.cell_index(position, velocity)


def estimate_velocities(times, positions, window: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference velocities along a raw trajectory.

    Central differences over ``window`` frames where possible, one-sided at
    the ends. Returns (velocities (T, 2), speeds (T,)). Steps with zero time
    difference get zero velocity.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(positions, dtype=float).reshape(len(t), 2)
    n = len(t)
    if n < 2:
        raise InvalidInputError("velocity estimation needs at least 2 points")
    if window < 1:
        raise InvalidInputError("window must be >= 1")
    idx = np.arange(n)
    lo = np.maximum(idx - window, 0)
    hi = np.minimum(idx + window, n - 1)
    dt = t[hi] - t[lo]
    safe = np.where(dt > 0, dt, 1.0)
    vel = (p[hi] - p[lo]) / safe[:, None]
    vel[dt <= 0] = 0.0
    speeds = np.hypot(vel[:, 0], vel[:, 1])
    return vel, speeds


@dataclass(frozen=True)
class Observation:
    """One tokenized person-frame: where, when and how fast."""

    traj_id: str
    group_id: int
    cell: int
    timestamp: float
    speed: float
    raw_position: tuple[float, float]

    def __post_init__(self):
        if self.timestamp < 0:
            raise InvalidInputError(f"negative timestamp {self.timestamp}")
        if self.speed < 0:
            raise InvalidInputError(f"negative speed {self.speed}")
        if self.cell < 0:
            raise InvalidInputError(f"negative cell index {self.cell}")


@dataclass(frozen=True)
class Trajectory:
    """Ordered observations of one tracked person."""

    traj_id: str
    observations: tuple[Observation, ...]

    def __post_init__(self):
        ts = [o.timestamp for o in self.observations]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError(f"trajectory {self.traj_id}: timestamps decrease")
        if any(o.traj_id != self.traj_id for o in self.observations):
            raise InvalidInputError(f"trajectory {self.traj_id}: mixed traj_ids")

    def __len__(self) -> int:
        return len(self.observations)

    def cells(self) -> np.ndarray:
        return np.array([o.cell for o in self.observations], dtype=np.int64)

    def timestamps(self) -> np.ndarray:
        return np.array([o.timestamp for o in self.observations], dtype=float)

    def speeds(self) -> np.ndarray:
        return np.array([o.speed for o in self.observations], dtype=float)

    def positions(self) -> np.ndarray:
        return np.array([o.raw_position for o in self.observations], dtype=float)

    def with_groups(self, group_ids) -> "Trajectory":
        obs = tuple(
            replace(o, group_id=int(g)) for o, g in zip(self.observations, group_ids)
        )
        return Trajectory(self.traj_id, obs)


def tokenize_trajectory(
    traj_id: str,
    times,
    positions,
    cb: Codebook,
    window: int = 1,
    on_out_of_bounds: str = "clamp",
) -> tuple[Trajectory, int]:
    """Estimate velocities and tokenize a raw (t, x, y) trajectory.

    Returns the tokenized trajectory plus the number of positions that fell
    outside the scene bounds (clamped by default, rejected with
    ``on_out_of_bounds='error'``).
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(positions, dtype=float).reshape(len(t), 2)
    vel, speeds = estimate_velocities(t, p, window=window)
    clamped = 0
    obs = []
    for i in range(len(t)):
        if not cb.contains(p[i]):
            if on_out_of_bounds == "error":
                raise InvalidInputError(
                    f"trajectory {traj_id}: position {tuple(p[i])} out of bounds"
                )
            clamped += 1
        obs.append(
            Observation(
                traj_id=traj_id,
                group_id=0,
                cell=cb.cell_index(p[i], vel[i]),
                timestamp=float(t[i]),
                speed=float(speeds[i]),
                raw_position=(float(p[i, 0]), float(p[i, 1])),
            )
        )
    return Trajectory(traj_id, tuple(obs)), clamped
