"""Independent reference implementations used as test oracles."""

import numpy as np

from spikeyolo.evalkit import OrientedBox
from spikeyolo.voxelgrid import NO_SPIKE, SpikeTensor


def random_spike_tensor(rng, dims, silent_frac=0.2, t_max=2.0) -> SpikeTensor:
    values = rng.uniform(0.0, t_max, size=dims)
    values[rng.random(dims) < silent_frac] = NO_SPIKE
    return SpikeTensor(values)


def points_in_box(points: np.ndarray, box: OrientedBox) -> np.ndarray:
    """Membership test by rotating points into the box frame."""
    d = points - np.array([box.x, box.y])
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    u = d[:, 0] * c + d[:, 1] * s
    v = -d[:, 0] * s + d[:, 1] * c
    return (np.abs(u) <= box.l / 2) & (np.abs(v) <= box.w / 2)


def monte_carlo_iou(a: OrientedBox, b: OrientedBox, n: int, rng) -> float:
    """Sampling estimate of IoU over the joint bounding box."""
    corners = np.vstack([a.corners(), b.corners()])
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    pts = rng.uniform(lo, hi, size=(n, 2))
    in_a = points_in_box(pts, a)
    in_b = points_in_box(pts, b)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union
