"""Multi-part detection loss with the Euler orientation term, plus its
gradient with respect to the head tensor.

Each ground-truth box is assigned to the cell containing its center and to
the anchor whose shape overlaps it best; those (cell, anchor) slots are
"responsible".  The loss is a sum of squared errors:

* coordinates (weighted ``lambda_coord``): sigmoid(t_x), sigmoid(t_y) toward
  the in-cell offsets and t_w, t_l toward the log size ratios;
* orientation (weighted ``lambda_coord``): (t_im, t_re) toward
  (sin yaw, cos yaw) on responsible slots;
* objectness: sigmoid(p_0) toward the decoded box / ground-truth IoU (or a
  constant 1.0 in ``obj_target="one"`` mode, which makes the loss an exact
  function of the head and keeps finite-difference checks clean);
* no-object (weighted ``lambda_noobj``): sigmoid(p_0) toward 0 everywhere
  else;
* classes: softmax scores toward one-hot, squared error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import BOX_CHANNELS, DEFAULT_ANCHORS
from .detection import GroundTruthBox, cell_size_m, sigmoid, softmax
from .errors import DecodeError
from .evalkit import OrientedBox, rotated_iou
from .pointcloud import DEFAULT_ROI, Roi


@dataclass(frozen=True)
class LossHyper:
    lambda_coord: float = 5.0
    lambda_noobj: float = 0.5
    obj_target: str = "iou"  # "iou" or "one"

    def __post_init__(self) -> None:
        if self.obj_target not in ("iou", "one"):
            raise ValueError(f"obj_target must be 'iou' or 'one', got {self.obj_target!r}")


@dataclass(frozen=True)
class LossBreakdown:
    coord: float
    obj: float
    noobj: float
    cls: float
    euler: float

    @property
    def total(self) -> float:
        return self.coord + self.obj + self.noobj + self.cls + self.euler


@dataclass
class Targets:
    """Responsible-slot masks and regression targets, shaped (L, W, A)."""

    resp: np.ndarray
    frac_x: np.ndarray
    frac_y: np.ndarray
    t_w: np.ndarray
    t_l: np.ndarray
    t_im: np.ndarray
    t_re: np.ndarray
    class_id: np.ndarray
    boxes_grid: np.ndarray  # (L, W, A, 5): center/size/yaw in cell units

    @property
    def n_responsible(self) -> int:
        return int(self.resp.sum())


def _shape_iou(w: float, l: float, p_w: float, p_l: float) -> float:
    inter = min(w, p_w) * min(l, p_l)
    union = w * l + p_w * p_l - inter
    return inter / union if union > 0 else 0.0


def _prior_pairs(anchors) -> list[tuple[float, float]]:
    return [
        (a.p_w, a.p_l) if hasattr(a, "p_w") else (float(a[0]), float(a[1]))
        for a in anchors
    ]


def assign_targets(
    boxes: Sequence[GroundTruthBox],
    head_dims: tuple[int, int],
    anchors: Sequence = DEFAULT_ANCHORS,
    roi: Roi = DEFAULT_ROI,
) -> Targets:
    """Map ground-truth boxes onto responsible (cell, anchor) slots.

    The responsible anchor maximizes the axis-aligned shape IoU with the box
    at the box's cell.  A slot already claimed by an earlier box is left
    unchanged.
    """
    n_x, n_y = head_dims
    n_a = len(anchors)
    scale = cell_size_m(head_dims, roi)
    t = Targets(
        resp=np.zeros((n_x, n_y, n_a), dtype=bool),
        frac_x=np.zeros((n_x, n_y, n_a)),
        frac_y=np.zeros((n_x, n_y, n_a)),
        t_w=np.zeros((n_x, n_y, n_a)),
        t_l=np.zeros((n_x, n_y, n_a)),
        t_im=np.zeros((n_x, n_y, n_a)),
        t_re=np.zeros((n_x, n_y, n_a)),
        class_id=np.zeros((n_x, n_y, n_a), dtype=np.int64),
        boxes_grid=np.zeros((n_x, n_y, n_a, 5)),
    )
    priors = _prior_pairs(anchors)
    for box in boxes:
        b_x = (box.x_m - roi.x_range[0]) / scale
        b_y = (box.y_m - roi.y_range[0]) / scale
        if not (0 <= b_x < n_x and 0 <= b_y < n_y):
            raise DecodeError(f"ground-truth center ({box.x_m}, {box.y_m}) outside the grid")
        c_x, c_y = int(b_x), int(b_y)
        w_cells = box.w_m / scale
        l_cells = box.l_m / scale
        best = max(
            range(n_a), key=lambda a: _shape_iou(w_cells, l_cells, *priors[a])
        )
        if t.resp[c_x, c_y, best]:
            continue
        p_w, p_l = priors[best]
        t.resp[c_x, c_y, best] = True
        t.frac_x[c_x, c_y, best] = b_x - c_x
        t.frac_y[c_x, c_y, best] = b_y - c_y
        t.t_w[c_x, c_y, best] = math.log(w_cells / p_w)
        t.t_l[c_x, c_y, best] = math.log(l_cells / p_l)
        t.t_im[c_x, c_y, best] = math.sin(box.yaw)
        t.t_re[c_x, c_y, best] = math.cos(box.yaw)
        t.class_id[c_x, c_y, best] = box.class_id
        t.boxes_grid[c_x, c_y, best] = (b_x, b_y, w_cells, l_cells, box.yaw)
    return t


def euler_loss(
    t_im: np.ndarray,
    t_re: np.ndarray,
    target_im: np.ndarray,
    target_re: np.ndarray,
    resp: np.ndarray,
    lambda_coord: float = 5.0,
) -> float:
    """Orientation regression term: weighted squared error on responsible slots."""
    with np.errstate(over="ignore"):
        d_im = np.where(resp, t_im - target_im, 0.0)
        d_re = np.where(resp, t_re - target_re, 0.0)
        return float(lambda_coord * np.sum(d_im**2 + d_re**2))


def _decoded_iou_targets(slots: np.ndarray, targets: Targets, anchors) -> np.ndarray:
    """Rotated IoU between each responsible slot's decoded box and its target.

    Treated as a constant during differentiation (the usual convention).
    """
    iou = np.zeros(targets.resp.shape)
    priors = _prior_pairs(anchors)
    p_w = np.array([p for p, _ in priors])
    p_l = np.array([p for _, p in priors])
    for c_x, c_y, a in np.argwhere(targets.resp):
        s = slots[c_x, c_y, a]
        # size exponents clamped so degenerate heads still yield a valid box
        pred = OrientedBox(
            float(sigmoid(s[0]) + c_x),
            float(sigmoid(s[1]) + c_y),
            float(p_w[a] * math.exp(min(max(s[2], -50.0), 50.0))),
            float(p_l[a] * math.exp(min(max(s[3], -50.0), 50.0))),
            float(math.atan2(s[4], s[5])),
        )
        b_x, b_y, w_c, l_c, yaw = targets.boxes_grid[c_x, c_y, a]
        iou[c_x, c_y, a] = rotated_iou(pred, OrientedBox(b_x, b_y, w_c, l_c, yaw))
    return iou


def yolo_loss(
    head: np.ndarray,
    targets: Targets,
    hyper: LossHyper = LossHyper(),
    anchors: Sequence = DEFAULT_ANCHORS,
) -> LossBreakdown:
    loss, _ = yolo_loss_grad(head, targets, hyper, anchors, need_grad=False)
    return loss


def yolo_loss_grad(
    head: np.ndarray,
    targets: Targets,
    hyper: LossHyper = LossHyper(),
    anchors: Sequence = DEFAULT_ANCHORS,
    need_grad: bool = True,
) -> tuple[LossBreakdown, np.ndarray | None]:
    """Loss breakdown and (optionally) d(loss)/d(head)."""
    head = np.asarray(head, dtype=np.float64)
    n_a = len(anchors)
    values = head.shape[2] // n_a
    if head.shape[2] != n_a * values or values < BOX_CHANNELS + 1:
        raise DecodeError(f"head channels {head.shape[2]} do not fit {n_a} anchors")
    slots = head.reshape(head.shape[0], head.shape[1], n_a, values)
    resp = targets.resp
    if resp.shape != slots.shape[:3]:
        raise DecodeError(f"target shape {resp.shape} != head slots {slots.shape[:3]}")
    lam_c = hyper.lambda_coord
    lam_n = hyper.lambda_noobj

    # overflow to inf is fine: a diverging run surfaces as a non-finite
    # total, which the trainer turns into TrainingDiverged
    with np.errstate(over="ignore"):
        sig_x = sigmoid(slots[..., 0])
        sig_y = sigmoid(slots[..., 1])
        t_w = slots[..., 2]
        t_l = slots[..., 3]
        t_im = slots[..., 4]
        t_re = slots[..., 5]
        sig_o = sigmoid(slots[..., 6])
        probs = softmax(slots[..., BOX_CHANNELS:], axis=-1)

        d_x = np.where(resp, sig_x - targets.frac_x, 0.0)
        d_y = np.where(resp, sig_y - targets.frac_y, 0.0)
        d_w = np.where(resp, t_w - targets.t_w, 0.0)
        d_l = np.where(resp, t_l - targets.t_l, 0.0)
        coord = lam_c * float(np.sum(d_x**2 + d_y**2 + d_w**2 + d_l**2))

        euler = euler_loss(t_im, t_re, targets.t_im, targets.t_re, resp, lam_c)

        if hyper.obj_target == "iou":
            obj_target = _decoded_iou_targets(slots, targets, anchors)
        else:
            obj_target = np.ones_like(sig_o)
        d_obj = np.where(resp, sig_o - obj_target, 0.0)
        obj = float(np.sum(d_obj**2))
        noobj = lam_n * float(np.sum(np.where(resp, 0.0, sig_o) ** 2))

        one_hot = np.zeros_like(probs)
        idx = np.argwhere(resp)
        one_hot[idx[:, 0], idx[:, 1], idx[:, 2], targets.class_id[resp]] = 1.0
        d_cls = np.where(resp[..., None], probs - one_hot, 0.0)
        cls = float(np.sum(d_cls**2))

        breakdown = LossBreakdown(coord=coord, obj=obj, noobj=noobj, cls=cls, euler=euler)
        if not need_grad:
            return breakdown, None

        grad = np.zeros_like(slots)
        grad[..., 0] = 2.0 * lam_c * d_x * sig_x * (1.0 - sig_x)
        grad[..., 1] = 2.0 * lam_c * d_y * sig_y * (1.0 - sig_y)
        grad[..., 2] = 2.0 * lam_c * d_w
        grad[..., 3] = 2.0 * lam_c * d_l
        grad[..., 4] = np.where(resp, 2.0 * lam_c * (t_im - targets.t_im), 0.0)
        grad[..., 5] = np.where(resp, 2.0 * lam_c * (t_re - targets.t_re), 0.0)
        d_sig_o = 2.0 * np.where(resp, d_obj, lam_n * sig_o)
        grad[..., 6] = d_sig_o * sig_o * (1.0 - sig_o)
        # softmax squared error: g_j = 2 p_j (e_j - sum_k e_k p_k), e = p - onehot
        inner = np.sum(d_cls * probs, axis=-1, keepdims=True)
        grad[..., BOX_CHANNELS:] = np.where(
            resp[..., None], 2.0 * probs * (d_cls - inner), 0.0
        )
    return breakdown, grad.reshape(head.shape)
