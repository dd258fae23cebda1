"""Decoding of the detection head into oriented boxes, suppression, and the
frame document format.

Head layout: the final tensor has ``n_anchors * values_per_anchor`` channels
per cell; each anchor's slice is ``(t_x, t_y, t_w, t_l, t_im, t_re, p_0,
class scores...)``.  Per cell ``(c_x, c_y)`` and anchor ``(p_w, p_l)``:

    b_x = sigmoid(t_x) + c_x          b_w = p_w * exp(t_w)
    b_y = sigmoid(t_y) + c_y          b_l = p_l * exp(t_l)
    b_theta = arctan2(t_im, t_re)     objectness = sigmoid(p_0)

Grid units convert to meters through the ROI span: with the default
768 x 1024 grid and a 24 x 32 head each cell covers 32 voxels = 2.5 m, so
``x_m = 2.5 b_x`` and ``y_m = 2.5 b_y - 40``.

Frame documents are JSON with a fixed key order: ``frame_id`` then
``boxes``, each box ``{class, objectness, x_m, y_m, w_m, l_m, yaw_rad}``
(ground-truth documents omit ``objectness``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import BOX_CHANNELS, DEFAULT_ANCHORS
from .errors import DecodeError
from .evalkit import EvalBox, OrientedBox, rotated_iou
from .pointcloud import DEFAULT_ROI, Roi

#: Default names for the eight class channels (the usual benchmark labels).
DEFAULT_CLASS_NAMES = (
    "Car",
    "Van",
    "Truck",
    "Pedestrian",
    "Person_sitting",
    "Cyclist",
    "Tram",
    "Misc",
)


@dataclass(frozen=True)
class AnchorPrior:
    """Box prior (width, length) in head-cell units."""

    p_w: float
    p_l: float

    def __post_init__(self) -> None:
        if not (self.p_w > 0 and self.p_l > 0):
            raise ValueError(f"anchor dims must be positive, got {self.p_w}, {self.p_l}")


@dataclass(frozen=True)
class RawPrediction:
    """The regressed values of one (cell, anchor) slot, before activation."""

    t_x: float
    t_y: float
    t_w: float
    t_l: float
    t_im: float
    t_re: float
    objectness_logit: float
    class_scores: np.ndarray


@dataclass(frozen=True)
class Detection:
    """One decoded box, in grid-cell units plus a meters-converted copy."""

    c_x: int
    c_y: int
    anchor: int
    b_x: float
    b_y: float
    b_w: float
    b_l: float
    b_theta: float
    x_m: float
    y_m: float
    w_m: float
    l_m: float
    objectness: float
    class_id: int
    class_probability: float

    def oriented_box(self) -> OrientedBox:
        return OrientedBox(self.x_m, self.y_m, self.w_m, self.l_m, self.b_theta)


@dataclass(frozen=True)
class GroundTruthBox:
    """A labelled box in meters, for target assignment and evaluation."""

    x_m: float
    y_m: float
    w_m: float
    l_m: float
    yaw: float
    class_id: int

    def __post_init__(self) -> None:
        if not (self.w_m > 0 and self.l_m > 0):
            raise ValueError(f"box dims must be positive, got {self.w_m}, {self.l_m}")

    def oriented_box(self) -> OrientedBox:
        return OrientedBox(self.x_m, self.y_m, self.w_m, self.l_m, self.yaw)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=axis, keepdims=True)


def cell_size_m(head_dims: tuple[int, int], roi: Roi = DEFAULT_ROI) -> float:
    """Meters per head cell; requires the grid to keep cells square."""
    sx = float(roi.spans[0]) / head_dims[0]
    sy = float(roi.spans[1]) / head_dims[1]
    if abs(sx - sy) > 1e-9:
        raise DecodeError(f"head cells must be square, got {sx} x {sy} m")
    return sx


def _split_head(head: np.ndarray, n_anchors: int) -> np.ndarray:
    if head.ndim != 3:
        raise DecodeError(f"head must be 3-D, got shape {head.shape}")
    channels = head.shape[2]
    if channels % n_anchors:
        raise DecodeError(f"{channels} channels not divisible by {n_anchors} anchors")
    values = channels // n_anchors
    if values < BOX_CHANNELS + 1:
        raise DecodeError(f"{values} values per anchor leaves no class channels")
    return head.reshape(head.shape[0], head.shape[1], n_anchors, values)


def raw_prediction_at(
    head: np.ndarray, c_x: int, c_y: int, anchor: int, n_anchors: int = len(DEFAULT_ANCHORS)
) -> RawPrediction:
    """The raw regressor slot for one (cell, anchor)."""
    slab = _split_head(np.asarray(head, dtype=np.float64), n_anchors)[c_x, c_y, anchor]
    return RawPrediction(
        t_x=float(slab[0]),
        t_y=float(slab[1]),
        t_w=float(slab[2]),
        t_l=float(slab[3]),
        t_im=float(slab[4]),
        t_re=float(slab[5]),
        objectness_logit=float(slab[6]),
        class_scores=slab[BOX_CHANNELS:].copy(),
    )


def decode(
    head: np.ndarray,
    anchors: Sequence = DEFAULT_ANCHORS,
    obj_threshold: float = 0.5,
    roi: Roi = DEFAULT_ROI,
) -> list[Detection]:
    """Decode the head tensor into detections above ``obj_threshold``.

    Output order is deterministic: row-major over cells, then anchor index.
    """
    priors = [a if isinstance(a, AnchorPrior) else AnchorPrior(a[0], a[1]) for a in anchors]
    head = np.asarray(head, dtype=np.float64)
    slots = _split_head(head, len(priors))
    n_x, n_y = slots.shape[0], slots.shape[1]
    scale = cell_size_m((n_x, n_y), roi)

    frac_x = sigmoid(slots[..., 0])
    frac_y = sigmoid(slots[..., 1])
    b_w = np.array([p.p_w for p in priors]) * np.exp(slots[..., 2])
    b_l = np.array([p.p_l for p in priors]) * np.exp(slots[..., 3])
    b_theta = np.arctan2(slots[..., 4], slots[..., 5])
    # keep yaw in (-pi, pi]: arctan2 maps (-0.0, x<0) to exactly -pi
    b_theta = np.where(b_theta <= -math.pi, b_theta + 2.0 * math.pi, b_theta)
    objectness = sigmoid(slots[..., 6])
    class_probs = softmax(slots[..., BOX_CHANNELS:], axis=-1)

    keep = np.argwhere(objectness >= obj_threshold)
    detections: list[Detection] = []
    for c_x, c_y, a in keep:
        b_x = frac_x[c_x, c_y, a] + c_x
        b_y = frac_y[c_x, c_y, a] + c_y
        probs = class_probs[c_x, c_y, a]
        class_id = int(np.argmax(probs))
        detections.append(
            Detection(
                c_x=int(c_x),
                c_y=int(c_y),
                anchor=int(a),
                b_x=float(b_x),
                b_y=float(b_y),
                b_w=float(b_w[c_x, c_y, a]),
                b_l=float(b_l[c_x, c_y, a]),
                b_theta=float(b_theta[c_x, c_y, a]),
                x_m=float(b_x * scale),
                y_m=float(b_y * scale + roi.y_range[0]),
                w_m=float(b_w[c_x, c_y, a] * scale),
                l_m=float(b_l[c_x, c_y, a] * scale),
                objectness=float(objectness[c_x, c_y, a]),
                class_id=class_id,
                class_probability=float(probs[class_id]),
            )
        )
    return detections


def nms(detections: Sequence[Detection], iou_threshold: float = 0.4) -> list[Detection]:
    """Greedy per-class suppression by descending objectness."""
    survivors: list[tuple[int, Detection]] = []
    by_class: dict[int, list[tuple[int, Detection]]] = {}
    for i, det in enumerate(detections):
        by_class.setdefault(det.class_id, []).append((i, det))
    for class_id in sorted(by_class):
        group = sorted(by_class[class_id], key=lambda item: (-item[1].objectness, item[0]))
        kept: list[tuple[int, Detection]] = []
        for i, det in group:
            box = det.oriented_box()
            if all(rotated_iou(box, k.oriented_box()) < iou_threshold for _, k in kept):
                kept.append((i, det))
        survivors.extend(kept)
    survivors.sort(key=lambda item: item[0])
    return [det for _, det in survivors]


# ---------------------------------------------------------------------------
# Frame documents
# ---------------------------------------------------------------------------


def _class_name(class_id: int, class_names: Sequence[str]) -> str:
    if 0 <= class_id < len(class_names):
        return class_names[class_id]
    return f"class_{class_id}"


def detections_document(
    frame_id: str,
    detections: Sequence[Detection],
    class_names: Sequence[str] = DEFAULT_CLASS_NAMES,
) -> str:
    """Serialize one frame's detections with a stable key order."""
    boxes = [
        {
            "class": _class_name(d.class_id, class_names),
            "objectness": round(d.objectness, 6),
            "x_m": round(d.x_m, 6),
            "y_m": round(d.y_m, 6),
            "w_m": round(d.w_m, 6),
            "l_m": round(d.l_m, 6),
            "yaw_rad": round(d.b_theta, 6),
        }
        for d in detections
    ]
    return json.dumps({"frame_id": frame_id, "boxes": boxes}, indent=2) + "\n"


def ground_truth_document(
    frame_id: str,
    boxes: Sequence[GroundTruthBox],
    class_names: Sequence[str] = DEFAULT_CLASS_NAMES,
) -> str:
    docs = [
        {
            "class": _class_name(b.class_id, class_names),
            "x_m": round(b.x_m, 6),
            "y_m": round(b.y_m, 6),
            "w_m": round(b.w_m, 6),
            "l_m": round(b.l_m, 6),
            "yaw_rad": round(b.yaw, 6),
        }
        for b in boxes
    ]
    return json.dumps({"frame_id": frame_id, "boxes": docs}, indent=2) + "\n"


def parse_frame_document(text: str) -> tuple[str, list[EvalBox]]:
    """Parse a detections or ground-truth document into evaluation boxes."""
    doc = json.loads(text)
    frame_id = str(doc.get("frame_id", ""))
    boxes: list[EvalBox] = []
    for entry in doc.get("boxes", []):
        box = OrientedBox(
            float(entry["x_m"]),
            float(entry["y_m"]),
            float(entry["w_m"]),
            float(entry["l_m"]),
            float(entry["yaw_rad"]),
        )
        score = entry.get("objectness")
        boxes.append(EvalBox(str(entry["class"]), None if score is None else float(score), box))
    return frame_id, boxes


def read_frame_file(path: str | Path) -> tuple[str, list[EvalBox]]:
    return parse_frame_document(Path(path).read_text())


def write_detections_file(
    path: str | Path,
    frame_id: str,
    detections: Sequence[Detection],
    class_names: Sequence[str] = DEFAULT_CLASS_NAMES,
) -> None:
    Path(path).write_text(detections_document(frame_id, detections, class_names))
