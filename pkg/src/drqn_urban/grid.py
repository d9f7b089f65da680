"""Ego-centric 45x30x4 bird's-eye grid.

Rows run along the ego heading from 9 m behind to 36 m ahead of the footprint
center, columns run across it from 15 m left (col 0) to 15 m right. Cells are
1 m. Layers: occupancy, relative heading / pi, relative speed / v_norm, and
the road class under the pedestrian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sim import Cell, WorldState

ROWS, COLS, LAYERS = 45, 30, 4
BEHIND = 9
HALF_WIDTH = 15

# layer-4 code per Cell value
CLASS_CODE = {Cell.OFF_MAP: 0.0, Cell.WALKWAY: 1.0 / 3.0, Cell.CROSSING: 2.0 / 3.0, Cell.ROAD: 1.0}


@dataclass(frozen=True)
class GridObservation:
    """Sparse storage of the grid: only occupied cells carry values, so the
    replay memory keeps a flat cell index and the four layer values."""

    cells: np.ndarray  # (k,) flat row-major indices into ROWS x COLS
    values: np.ndarray  # (k, 4) float32

    def to_array(self, dtype=np.float32):
        out = np.zeros((ROWS * COLS, LAYERS), dtype=dtype)
        out[self.cells] = self.values
        return out.reshape(ROWS, COLS, LAYERS)

    @staticmethod
    def stack(observations, dtype=np.float32):
        """Dense ``(len, 45, 30, 4)`` array from a sequence of observations."""
        out = np.zeros((len(observations), ROWS * COLS, LAYERS), dtype=dtype)
        for k, obs in enumerate(observations):
            out[k, obs.cells] = obs.values
        return out.reshape(len(observations), ROWS, COLS, LAYERS)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def grid_index(lon, lat):
    """(row, col) of an ego-frame offset, or None outside the window."""
    row = math.floor(BEHIND + lon)
    col = math.floor(HALF_WIDTH - lat)
    if 0 <= row < ROWS and 0 <= col < COLS:
        return row, col
    return None


def encode(world: WorldState, v_norm: float) -> GridObservation:
    ego = world.ego
    ex, ey = world.ego_xy
    ch, sh = math.cos(ego.heading), math.sin(ego.heading)
    best = {}
    for p in world.pedestrians:
        dx, dy = p.x - ex, p.y - ey
        lon = dx * ch + dy * sh
        lat = -dx * sh + dy * ch
        idx = grid_index(lon, lat)
        if idx is None:
            continue
        dist = math.hypot(dx, dy)
        key = idx[0] * COLS + idx[1]
        if key in best and best[key][0] <= dist:
            continue
        rel_heading = wrap_angle(p.heading - ego.heading) / math.pi
        rel_speed = min(1.0, max(-1.0, (p.speed - ego.v) / v_norm))
        code = CLASS_CODE[world.map.label_at(p.x, p.y)]
        best[key] = (dist, (1.0, rel_heading, rel_speed, code))
    keys = sorted(best)
    cells = np.array(keys, dtype=np.int16)
    values = np.array([best[k][1] for k in keys], dtype=np.float32).reshape(len(keys), LAYERS)
    return GridObservation(cells, values)


def write_pgm(path, layer):
    """Write one layer as a binary PGM, mapping [-1, 1] to [0, 255]."""
    img = np.clip(np.round((np.asarray(layer, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


def read_pgm(path):
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def dump_layers(obs: GridObservation, prefix):
    arr = obs.to_array()
    paths = []
    for k in range(LAYERS):
        path = Path(f"{prefix}_layer{k + 1}.pgm")
        write_pgm(path, arr[:, :, k])
        paths.append(path)
    return paths
