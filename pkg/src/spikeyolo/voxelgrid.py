"""Quantization of a filtered cloud into a dense spike-time tensor.

The default grid carves the region of interest into 768 x 1024 x 21 cells
(about 0.08 x 0.08 x 0.19 m each).  Every occupied cell takes the round-trip
delay of one of its points, chosen by a deterministic per-voxel hash so the
result does not depend on point ordering or on how work was partitioned
across threads.

Empty cells have two representations:

* ``paper-literal`` (default): value 0 — an empty cell emits the earliest
  possible spike;
* ``sentinel``: value ``NO_SPIKE`` (+inf) — an empty cell never fires, the
  usual temporal-coding convention.

Tensor file format (little-endian): 16-byte header — magic ``SPKT``,
``u32`` version = 1, three ``u16`` dims, 2 pad bytes — followed by
``prod(dims)`` float32 values in row-major ``(x, y, z)`` order; +inf encodes
``NO_SPIKE``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import struct

import numpy as np

from .errors import OutOfRoi, SpikeYoloError
from .pointcloud import DEFAULT_ROI, Point, PointCloud, Roi, SPEED_OF_LIGHT, round_trip_times

#: Sentinel spike time of a neuron (or cell) that never fires.
NO_SPIKE = float("inf")

_MAGIC = b"SPKT"
_VERSION = 1
_HEADER = struct.Struct("<4sI3H2x")

EMPTY_MODES = ("paper-literal", "sentinel")


class TensorFormatError(SpikeYoloError):
    """Spike-tensor blob has a bad magic, version, or size."""


@dataclass(frozen=True)
class GridSpec:
    """Voxel grid geometry: an ROI plus cell counts per axis."""

    roi: Roi = DEFAULT_ROI
    dims: tuple[int, int, int] = (768, 1024, 21)

    def __post_init__(self) -> None:
        if any(d <= 0 for d in self.dims):
            raise ValueError(f"grid dims must be positive, got {self.dims}")
        if any(d > 0xFFFF for d in self.dims):
            raise ValueError(f"grid dims must fit in u16, got {self.dims}")

    @property
    def cell_size(self) -> tuple[float, float, float]:
        """(dx, dy, dz) in meters."""
        spans = self.roi.spans
        return (
            float(spans[0]) / self.dims[0],
            float(spans[1]) / self.dims[1],
            float(spans[2]) / self.dims[2],
        )

    @property
    def max_round_trip(self) -> float:
        """Round-trip delay of the farthest ROI corner, in seconds.

        Dividing by this bound maps every in-ROI delay into [0, 1].
        """
        return 2.0 * self.roi.far_corner_distance() / SPEED_OF_LIGHT


DEFAULT_GRID = GridSpec()


@dataclass
class SpikeTensor:
    """Dense grid of spike times; ``NO_SPIKE`` marks cells that never fire.

    ``values`` is float64 with shape ``dims``; every entry is either a finite
    time >= 0 or ``NO_SPIKE``.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"spike tensor must be 3-D, got shape {self.values.shape}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]

    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def num_fired(self) -> int:
        return int(np.count_nonzero(np.isfinite(self.values)))

    def validate(self) -> None:
        v = self.values
        if np.isnan(v).any():
            raise ValueError("spike tensor contains NaN")
        if (v[np.isfinite(v)] < 0).any():
            raise ValueError("spike tensor contains negative times")

    @classmethod
    def filled(cls, dims: tuple[int, int, int], value: float) -> "SpikeTensor":
        return cls(np.full(dims, value, dtype=np.float64))


def voxel_index(p: Point, g: GridSpec = DEFAULT_GRID) -> tuple[int, int, int]:
    """Cell coordinates of a point; raises :class:`OutOfRoi` outside the grid."""
    idx = voxel_indices(np.asarray([[p[0], p[1], p[2]]], dtype=np.float64), g)
    return (int(idx[0, 0]), int(idx[0, 1]), int(idx[0, 2]))


def voxel_indices(xyz: np.ndarray, g: GridSpec = DEFAULT_GRID) -> np.ndarray:
    """Vectorized voxel coordinates, ``(N, 3)`` int64.

    Points must lie inside the half-open ROI; the floor arithmetic then
    always lands inside ``dims``.
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    inside = g.roi.contains(xyz)
    if not inside.all():
        bad = int(np.argwhere(~inside)[0, 0])
        raise OutOfRoi(f"point {bad} at {tuple(xyz[bad])} is outside the ROI")
    rel = (xyz - g.roi.mins) / np.asarray(g.cell_size)
    idx = np.floor(rel).astype(np.int64)
    # Guard against p == max - ulp landing exactly on the upper face.
    np.minimum(idx, np.asarray(g.dims, dtype=np.int64) - 1, out=idx)
    return idx


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer; uint64 in, uint64 out."""
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return x


def _selection_priority(seed: int, flat_voxel: np.ndarray, xyzr32: np.ndarray) -> np.ndarray:
    """Per-point draw keyed by (seed, voxel index, point content).

    Hashing the float32 bit patterns (the wire representation) makes the
    per-voxel argmin independent of point order and of any partitioning of
    the cloud across workers.
    """
    bits = xyzr32.view(np.uint32).astype(np.uint64)
    a = (bits[:, 0] << np.uint64(32)) | bits[:, 1]
    b = (bits[:, 2] << np.uint64(32)) | bits[:, 3]
    h = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ flat_voxel.astype(np.uint64))
    h = _mix64(h ^ a)
    h = _mix64(h ^ b)
    return h


def voxelize(
    cloud: PointCloud,
    g: GridSpec = DEFAULT_GRID,
    seed: int = 0,
    normalize: bool = False,
    empty_mode: str = "paper-literal",
) -> SpikeTensor:
    """Build the spike-time tensor for an ROI-filtered cloud.

    Each occupied voxel takes the round-trip time of one uniformly-hashed
    contained point (deterministic given ``seed``).  Empty voxels are 0 in
    ``paper-literal`` mode and ``NO_SPIKE`` in ``sentinel`` mode.  With
    ``normalize``, finite times are divided by ``g.max_round_trip`` so they
    land in [0, 1].
    """
    if empty_mode not in EMPTY_MODES:
        raise ValueError(f"empty_mode must be one of {EMPTY_MODES}, got {empty_mode!r}")
    fill = 0.0 if empty_mode == "paper-literal" else NO_SPIKE
    values = np.full(g.dims, fill, dtype=np.float64)

    if len(cloud) > 0:
        idx = voxel_indices(cloud.xyz, g)
        flat = (idx[:, 0] * g.dims[1] + idx[:, 1]) * g.dims[2] + idx[:, 2]
        prio = _selection_priority(seed, flat, cloud.xyzr)
        order = np.lexsort((prio, flat))
        flat_sorted = flat[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = flat_sorted[1:] != flat_sorted[:-1]
        chosen = order[first]
        times = round_trip_times(cloud.xyz[chosen])
        values.reshape(-1)[flat[chosen]] = times

    if normalize:
        finite = np.isfinite(values)
        values[finite] /= g.max_round_trip
    return SpikeTensor(values)


def tensor_to_bytes(t: SpikeTensor) -> bytes:
    """Serialize to the SPKT container (values cast to float32)."""
    dims = t.dims
    header = _HEADER.pack(_MAGIC, _VERSION, dims[0], dims[1], dims[2])
    payload = np.ascontiguousarray(t.values, dtype="<f4").tobytes()
    return header + payload


def tensor_from_bytes(blob: bytes) -> SpikeTensor:
    if len(blob) < _HEADER.size:
        raise TensorFormatError(f"blob too short for header ({len(blob)} bytes)")
    magic, version, d0, d1, d2 = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    count = d0 * d1 * d2
    expected = _HEADER.size + 4 * count
    if len(blob) != expected:
        raise TensorFormatError(f"expected {expected} bytes for dims {(d0, d1, d2)}, got {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    tensor = SpikeTensor(values.reshape(d0, d1, d2))
    tensor.validate()
    return tensor


def save_tensor(t: SpikeTensor, path: str | Path) -> None:
    Path(path).write_bytes(tensor_to_bytes(t))


def load_tensor(path: str | Path) -> SpikeTensor:
    return tensor_from_bytes(Path(path).read_bytes())
