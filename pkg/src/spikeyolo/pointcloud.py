"""LiDAR point-cloud ingestion, region-of-interest filtering, and round-trip delays.

File format
-----------
A scan is a flat sequence of 16-byte records, four IEEE-754 single-precision
little-endian floats per record: ``(x, y, z, reflectance)``.  This is the
de-facto velodyne dump format.  ``parse_cloud`` and ``serialize_cloud`` are
exact inverses at the byte level.

Reflectance is parsed and carried along but plays no role downstream: the
encoding used by the rest of the pipeline is purely time-of-flight based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import MalformedCloud

#: Exact SI speed of light, m/s.
SPEED_OF_LIGHT = 299_792_458.0

_RECORD_BYTES = 16
_RECORD_DTYPE = np.dtype("<f4")


class Point(NamedTuple):
    """One LiDAR return in sensor coordinates (meters, unitless reflectance)."""

    x: float
    y: float
    z: float
    reflectance: float = 0.0


@dataclass
class PointCloud:
    """An ordered set of returns plus an opaque frame identifier.

    ``xyzr`` is an ``(N, 4)`` float32 array; rows are ``(x, y, z, reflectance)``
    in file order.  May be empty.
    """

    xyzr: np.ndarray
    frame_id: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.xyzr, dtype=np.float32)
        if arr.size == 0:
            arr = arr.reshape(0, 4)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValueError(f"point array must be (N, 4), got {arr.shape}")
        self.xyzr = arr

    def __len__(self) -> int:
        return self.xyzr.shape[0]

    def __iter__(self) -> Iterator[Point]:
        for row in self.xyzr:
            yield Point(float(row[0]), float(row[1]), float(row[2]), float(row[3]))

    def point(self, i: int) -> Point:
        row = self.xyzr[i]
        return Point(float(row[0]), float(row[1]), float(row[2]), float(row[3]))

    @property
    def xyz(self) -> np.ndarray:
        """``(N, 3)`` view of the coordinates."""
        return self.xyzr[:, :3]

    @classmethod
    def from_points(cls, points, frame_id: str = "") -> "PointCloud":
        rows = [(p[0], p[1], p[2], p[3] if len(p) > 3 else 0.0) for p in points]
        arr = np.asarray(rows, dtype=np.float32).reshape(len(rows), 4)
        return cls(arr, frame_id)


@dataclass(frozen=True)
class Roi:
    """Axis-aligned region of interest; membership is half-open per axis.

    Half-open intervals ``[min, max)`` keep the downstream voxel index in
    range at the far faces.
    """

    x_range: tuple[float, float] = (0.0, 60.0)
    y_range: tuple[float, float] = (-40.0, 40.0)
    z_range: tuple[float, float] = (-2.73, 1.27)

    def __post_init__(self) -> None:
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = getattr(self, name)
            if not (lo < hi):
                raise ValueError(f"{name} must satisfy min < max, got ({lo}, {hi})")

    @property
    def mins(self) -> np.ndarray:
        return np.array([self.x_range[0], self.y_range[0], self.z_range[0]])

    @property
    def maxs(self) -> np.ndarray:
        return np.array([self.x_range[1], self.y_range[1], self.z_range[1]])

    @property
    def spans(self) -> np.ndarray:
        return self.maxs - self.mins

    def contains(self, xyz: np.ndarray) -> np.ndarray:
        """Boolean mask of rows inside the half-open box."""
        xyz = np.asarray(xyz, dtype=np.float64)
        return np.all((xyz >= self.mins) & (xyz < self.maxs), axis=-1)

    def far_corner_distance(self) -> float:
        """Distance from the sensor origin to the farthest ROI corner."""
        far = np.maximum(np.abs(self.mins), np.abs(self.maxs))
        return float(np.sqrt(np.sum(far**2)))


DEFAULT_ROI = Roi()


def parse_cloud(blob: bytes, frame_id: str = "") -> PointCloud:
    """Decode a scan blob into a :class:`PointCloud`.

    Raises
    ------
    MalformedCloud
        If the blob length is not a multiple of 16, or any decoded value is
        non-finite (the message carries the index of the first bad record).
    """
    if len(blob) % _RECORD_BYTES != 0:
        raise MalformedCloud(
            f"blob length {len(blob)} is not a multiple of {_RECORD_BYTES}"
        )
    arr = np.frombuffer(blob, dtype=_RECORD_DTYPE).reshape(-1, 4).copy()
    finite = np.isfinite(arr)
    if not finite.all():
        bad = int(np.argwhere(~finite)[0, 0])
        raise MalformedCloud(f"non-finite value in record {bad}")
    return PointCloud(arr, frame_id)


def serialize_cloud(cloud: PointCloud) -> bytes:
    """Inverse of :func:`parse_cloud`; round-trips bit-exactly."""
    return np.ascontiguousarray(cloud.xyzr, dtype=_RECORD_DTYPE).tobytes()


def load_cloud(path: str | Path) -> PointCloud:
    path = Path(path)
    return parse_cloud(path.read_bytes(), frame_id=path.stem)


def save_cloud(cloud: PointCloud, path: str | Path) -> None:
    Path(path).write_bytes(serialize_cloud(cloud))


def distance(p: Point) -> float:
    """Euclidean distance of a return from the sensor origin."""
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    return math.sqrt(x * x + y * y + z * z)


def distances(xyz: np.ndarray) -> np.ndarray:
    """Vectorized :func:`distance` over an ``(N, 3)`` array."""
    xyz = np.asarray(xyz, dtype=np.float64)
    return np.sqrt(np.sum(xyz * xyz, axis=-1))


def round_trip_time(p: Point) -> float:
    """Out-and-back pulse delay in seconds: twice the distance over c."""
    return 2.0 * distance(p) / SPEED_OF_LIGHT


def round_trip_times(xyz: np.ndarray) -> np.ndarray:
    """Vectorized :func:`round_trip_time`."""
    return 2.0 * distances(xyz) / SPEED_OF_LIGHT


def filter_roi(cloud: PointCloud, roi: Roi = DEFAULT_ROI) -> PointCloud:
    """Keep exactly the points inside ``roi`` (half-open per axis), in order."""
    mask = roi.contains(cloud.xyz)
    return PointCloud(cloud.xyzr[mask], cloud.frame_id)
