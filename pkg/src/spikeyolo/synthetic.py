"""Synthetic single-object scenes for desk-scale training and demos.

A scene is a car-sized rectangular shell of LiDAR returns dropped into the
region of interest, plus a sprinkling of ground clutter, voxelized on a
reduced grid.  Everything is keyed by (seed, sample index), so a generator
replays identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .detection import GroundTruthBox
from .pointcloud import PointCloud, filter_roi
from .voxelgrid import GridSpec, SpikeTensor, voxelize

TOY_GRID = GridSpec(dims=(96, 128, 21))


class Scene(NamedTuple):
    tensor: SpikeTensor
    boxes: list[GroundTruthBox]
    cloud: PointCloud


@dataclass(frozen=True)
class SceneGenerator:
    """Deterministic stream of single-object scenes on a reduced grid."""

    seed: int = 0
    grid: GridSpec = TOY_GRID
    n_objects: int = 1
    points_per_object: int = 300
    n_clutter: int = 120
    class_id: int = 0
    normalize: bool = True
    empty_mode: str = "paper-literal"

    def sample(self, index: int) -> Scene:
        rng = np.random.default_rng([self.seed, index])
        points: list[np.ndarray] = []
        boxes: list[GroundTruthBox] = []
        for _ in range(self.n_objects):
            cx = rng.uniform(10.0, 50.0)
            cy = rng.uniform(-30.0, 30.0)
            yaw = rng.uniform(-math.pi, math.pi)
            width = rng.uniform(1.6, 2.0)
            length = rng.uniform(3.6, 4.8)
            boxes.append(GroundTruthBox(cx, cy, width, length, yaw, self.class_id))
            points.append(
                _box_shell(rng, cx, cy, width, length, yaw, self.points_per_object)
            )
        if self.n_clutter:
            clutter = np.column_stack(
                [
                    rng.uniform(0.0, 60.0, self.n_clutter),
                    rng.uniform(-40.0, 40.0, self.n_clutter),
                    rng.uniform(-1.7, -1.5, self.n_clutter),
                    rng.uniform(0.0, 1.0, self.n_clutter),
                ]
            )
            points.append(clutter)
        cloud = filter_roi(
            PointCloud(np.concatenate(points).astype(np.float32), frame_id=f"scene{index:06d}"),
            self.grid.roi,
        )
        voxel_seed = int(rng.integers(0, 2**62))
        tensor = voxelize(
            cloud,
            self.grid,
            seed=voxel_seed,
            normalize=self.normalize,
            empty_mode=self.empty_mode,
        )
        return Scene(tensor, boxes, cloud)


def _box_shell(
    rng: np.random.Generator,
    cx: float,
    cy: float,
    width: float,
    length: float,
    yaw: float,
    n_points: int,
) -> np.ndarray:
    """Returns on the four side walls of an upright box, with small jitter."""
    perimeter = 2.0 * (width + length)
    s = rng.uniform(0.0, perimeter, n_points)
    u = np.empty(n_points)
    v = np.empty(n_points)
    half_l, half_w = 0.5 * length, 0.5 * width
    for i, si in enumerate(s):
        if si < length:
            u[i] = si - half_l
            v[i] = -half_w
        elif si < length + width:
            u[i] = half_l
            v[i] = (si - length) - half_w
        elif si < 2 * length + width:
            u[i] = (si - length - width) - half_l
            v[i] = half_w
        else:
            u[i] = -half_l
            v[i] = (si - 2 * length - width) - half_w
    u += rng.normal(0.0, 0.02, n_points)
    v += rng.normal(0.0, 0.02, n_points)
    c, sn = math.cos(yaw), math.sin(yaw)
    x = cx + u * c - v * sn
    y = cy + u * sn + v * c
    z = rng.uniform(-1.6, -0.2, n_points)
    r = rng.uniform(0.0, 1.0, n_points)
    return np.column_stack([x, y, z, r])
