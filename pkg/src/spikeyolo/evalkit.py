"""Rotated-box IoU, average precision, and a birds-eye-view raster.

IoU between oriented rectangles is computed exactly: one rectangle is
clipped against the four half-planes of the other (Sutherland-Hodgman),
and the intersection area follows from the shoelace formula.  Average
precision uses the 11-point interpolated protocol with per-class IoU
thresholds (0.7 for Car, 0.5 for Pedestrian and Cyclist).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .pointcloud import DEFAULT_ROI, Roi
from .voxelgrid import SpikeTensor


@dataclass(frozen=True)
class OrientedBox:
    """Planar rectangle: center (m), width, length (m), yaw (rad).

    ``length`` runs along the heading axis; ``width`` across it.
    """

    x: float
    y: float
    w: float
    l: float
    yaw: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.l > 0):
            raise ValueError(f"box dims must be positive, got w={self.w}, l={self.l}")

    def corners(self) -> np.ndarray:
        """Counter-clockwise corner coordinates, shape (4, 2)."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = 0.5 * self.l, 0.5 * self.w
        local = np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])

    def area(self) -> float:
        return self.w * self.l

    def circumradius(self) -> float:
        return 0.5 * math.hypot(self.w, self.l)


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _clip_halfplane(poly: list, a: np.ndarray, b: np.ndarray) -> list:
    """Keep the part of ``poly`` left of the directed edge a -> b."""
    out: list = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        dp = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        dq = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
        if dp >= 0:
            out.append(p)
            if dq < 0:
                t = dp / (dp - dq)
                out.append(p + t * (q - p))
        elif dq >= 0:
            t = dp / (dp - dq)
            out.append(p + t * (q - p))
    return out


def intersection_area(a: OrientedBox, b: OrientedBox) -> float:
    """Exact area of overlap between two oriented rectangles."""
    poly = list(a.corners())
    bc = b.corners()
    for i in range(4):
        poly = _clip_halfplane(poly, bc[i], bc[(i + 1) % 4])
        if len(poly) < 3:
            return 0.0
    return _polygon_area(np.asarray(poly))


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection-over-union of two oriented rectangles, in [0, 1]."""
    if math.hypot(b.x - a.x, b.y - a.y) > a.circumradius() + b.circumradius():
        return 0.0
    inter = intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.area() + b.area() - inter
    return inter / union


@dataclass(frozen=True)
class EvalConfig:
    """Per-class IoU thresholds for matching detections to ground truth."""

    iou_thresholds: Mapping[str, float] = field(
        default_factory=lambda: {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}
    )
    default_threshold: float = 0.5

    def threshold(self, class_name: str) -> float:
        thr = self.iou_thresholds.get(class_name, self.default_threshold)
        if not (0.0 < thr <= 1.0):
            raise ValueError(f"IoU threshold for {class_name} must be in (0, 1], got {thr}")
        return thr


class EvalBox(NamedTuple):
    """One labelled box for evaluation; ``score`` is None for ground truth."""

    class_name: str
    score: float | None
    box: OrientedBox


def _interpolated_ap(hits: list[bool], n_gt: int) -> float:
    """11-point interpolated AP from per-detection hit flags.

    Detections must already be sorted by descending score.
    """
    if n_gt == 0:
        return 0.0
    tp = 0
    fp = 0
    precisions: list[float] = []
    recalls: list[float] = []
    for hit in hits:
        if hit:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / n_gt)
    total = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        candidates = [p for p, rec in zip(precisions, recalls) if rec >= r - 1e-12]
        total += max(candidates) if candidates else 0.0
    return total / 11.0


def average_precision(
    detections: Mapping[str, Sequence[EvalBox]],
    ground_truth: Mapping[str, Sequence[EvalBox]],
    cfg: EvalConfig = EvalConfig(),
) -> dict[str, float]:
    """Per-class 11-point AP over a set of frames.

    Detections are ranked globally by descending score; within a frame each
    ground-truth box can match at most one detection (greedy, best IoU among
    still-unmatched boxes of the same class).  Classes are those present in
    the ground truth; a class with detections but no ground truth anywhere
    is skipped with a warning.
    """
    classes = sorted({g.class_name for boxes in ground_truth.values() for g in boxes})
    det_classes = {d.class_name for boxes in detections.values() for d in boxes}
    for name in sorted(det_classes - set(classes)):
        warnings.warn(f"detections for class {name!r} have no ground truth; skipped")

    result: dict[str, float] = {}
    for name in classes:
        thr = cfg.threshold(name)
        gts = {
            frame: [g.box for g in boxes if g.class_name == name]
            for frame, boxes in ground_truth.items()
        }
        n_gt = sum(len(v) for v in gts.values())
        ranked: list[tuple[float, str, int, OrientedBox]] = []
        for frame, boxes in detections.items():
            for i, det in enumerate(boxes):
                if det.class_name == name:
                    if det.score is None:
                        raise ValueError("detections must carry scores")
                    ranked.append((det.score, frame, i, det.box))
        ranked.sort(key=lambda item: (-item[0], item[1], item[2]))
        matched: dict[str, set[int]] = {frame: set() for frame in gts}
        hits: list[bool] = []
        for _score, frame, _i, box in ranked:
            candidates = gts.get(frame, [])
            best_iou = 0.0
            best_j = -1
            for j, gt_box in enumerate(candidates):
                if j in matched.get(frame, set()):
                    continue
                iou = rotated_iou(box, gt_box)
                if iou > best_iou:
                    best_iou = iou
                    best_j = j
            if best_j >= 0 and best_iou >= thr:
                matched[frame].add(best_j)
                hits.append(True)
            else:
                hits.append(False)
        result[name] = _interpolated_ap(hits, n_gt)
    return result


# ---------------------------------------------------------------------------
# Birds-eye-view raster
# ---------------------------------------------------------------------------

RASTER_WIDTH = 1024
RASTER_HEIGHT = 768

_COLOR_DET = (255, 80, 80)
_COLOR_GT = (80, 255, 120)


def _draw_line(img: np.ndarray, r0: float, c0: float, r1: float, c1: float, color) -> None:
    n = int(max(abs(r1 - r0), abs(c1 - c0))) * 2 + 1
    for t in np.linspace(0.0, 1.0, n):
        r = int(round(r0 + t * (r1 - r0)))
        c = int(round(c0 + t * (c1 - c0)))
        if 0 <= r < img.shape[0] and 0 <= c < img.shape[1]:
            img[r, c] = color


def _box_pixels(box: OrientedBox, roi: Roi) -> np.ndarray:
    corners = box.corners()
    rows = (corners[:, 0] - roi.x_range[0]) / (roi.x_range[1] - roi.x_range[0]) * RASTER_HEIGHT
    cols = (corners[:, 1] - roi.y_range[0]) / (roi.y_range[1] - roi.y_range[0]) * RASTER_WIDTH
    return np.stack([rows, cols], axis=1)


def render_bev(
    tensor: SpikeTensor,
    detections: Iterable[OrientedBox] = (),
    ground_truth: Iterable[OrientedBox] = (),
    roi: Roi = DEFAULT_ROI,
) -> np.ndarray:
    """Top-down raster: occupancy shaded by normalized spike time, plus boxes.

    Returns a fixed 768 x 1024 RGB uint8 image (row = forward axis).  Cells
    whose earliest positive time is small (near returns) render bright;
    cells with no positive finite time (empty space in either encoding)
    stay black.  Detections draw in red, ground truth in green.
    """
    img = np.zeros((RASTER_HEIGHT, RASTER_WIDTH, 3), dtype=np.uint8)
    values = tensor.values
    positive = np.where(np.isfinite(values) & (values > 0), values, np.inf)
    column_time = positive.min(axis=2)
    occupied = np.isfinite(column_time)
    if occupied.any():
        t_max = column_time[occupied].max()
        shade = np.zeros_like(column_time)
        shade[occupied] = 55.0 + 200.0 * (1.0 - column_time[occupied] / t_max)
        rows = (np.arange(RASTER_HEIGHT) * values.shape[0]) // RASTER_HEIGHT
        cols = (np.arange(RASTER_WIDTH) * values.shape[1]) // RASTER_WIDTH
        gray = shade[np.ix_(rows, cols)].astype(np.uint8)
        img[:] = gray[..., None]
    for boxes, color in ((ground_truth, _COLOR_GT), (detections, _COLOR_DET)):
        for box in boxes:
            px = _box_pixels(box, roi)
            for i in range(4):
                r0, c0 = px[i]
                r1, c1 = px[(i + 1) % 4]
                _draw_line(img, r0, c0, r1, c1, color)
    return img


def write_ppm(img: np.ndarray, path: str | Path) -> None:
    """Write an RGB uint8 image as a binary portable pixmap (P6)."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3) uint8, got {img.shape}")
    header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + img.tobytes())


def convert_kitti_label(path: str | Path):
    """Placeholder for native label-file conversion.

    Native labels live in the camera frame; mapping them into the sensor
    plane needs the per-frame calibration matrices, which this toolkit does
    not handle.  Produce ground-truth documents in this package's own frame
    format instead (see ``detection.ground_truth_document``).
    """
    raise NotImplementedError(
        "native label conversion requires camera calibration handling, "
        "which is out of scope; supply ground truth in the package's own "
        "document format"
    )
