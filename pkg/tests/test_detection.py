import json
import math

import numpy as np
import pytest

from spikeyolo.config import DEFAULT_ANCHORS
from spikeyolo.detection import (
    DEFAULT_CLASS_NAMES,
    AnchorPrior,
    Detection,
    GroundTruthBox,
    decode,
    detections_document,
    ground_truth_document,
    nms,
    parse_frame_document,
    raw_prediction_at,
)
from spikeyolo.errors import DecodeError

N_ANCHORS = len(DEFAULT_ANCHORS)
VALUES = 15


def make_head(fill=0.0, dims=(24, 32)):
    return np.full((dims[0], dims[1], N_ANCHORS * VALUES), fill, dtype=np.float64)


def slot(head, cx, cy, a):
    return head[cx, cy, a * VALUES : (a + 1) * VALUES]


def make_detection(x, y, w, l, yaw, score, class_id=0):
    return Detection(
        c_x=0, c_y=0, anchor=0,
        b_x=x / 2.5, b_y=(y + 40) / 2.5, b_w=w / 2.5, b_l=l / 2.5, b_theta=yaw,
        x_m=x, y_m=y, w_m=w, l_m=l,
        objectness=score, class_id=class_id, class_probability=1.0,
    )


class TestDecode:
    def test_zero_logit_centers(self):
        head = make_head()
        dets = decode(head, obj_threshold=0.4)
        assert len(dets) == 24 * 32 * N_ANCHORS  # sigmoid(0) = 0.5 everywhere
        d = next(d for d in dets if (d.c_x, d.c_y, d.anchor) == (3, 4, 0))
        assert d.b_x == pytest.approx(3.5)
        assert d.b_y == pytest.approx(4.5)
        assert d.b_w == pytest.approx(DEFAULT_ANCHORS[0][0])  # t_w = 0 keeps the prior
        assert d.b_l == pytest.approx(DEFAULT_ANCHORS[0][1])
        assert d.objectness == pytest.approx(0.5)

    def test_meter_conversion(self):
        head = make_head()
        dets = decode(head, obj_threshold=0.4)
        d = next(d for d in dets if (d.c_x, d.c_y, d.anchor) == (3, 4, 0))
        assert d.x_m == pytest.approx(3.5 * 2.5)
        assert d.y_m == pytest.approx(4.5 * 2.5 - 40.0)
        assert d.w_m == pytest.approx(d.b_w * 2.5)

    def test_arctan2_axes(self):
        head = make_head()
        s = slot(head, 0, 0, 0)
        s[4], s[5] = 0.0, 1.0
        d0 = decode(head, obj_threshold=0.4)[0]
        assert d0.b_theta == 0.0
        s[4], s[5] = 1.0, 0.0
        d1 = decode(head, obj_threshold=0.4)[0]
        assert d1.b_theta == pytest.approx(math.pi / 2)

    def test_threshold_filters(self):
        head = make_head(-10.0)  # objectness ~ 4.5e-5
        s = slot(head, 5, 6, 2)
        s[6] = 3.0
        dets = decode(head, obj_threshold=0.5)
        assert [(d.c_x, d.c_y, d.anchor) for d in dets] == [(5, 6, 2)]

    def test_range_invariants(self):
        rng = np.random.default_rng(20)
        head = rng.normal(0, 2, size=(12, 16, N_ANCHORS * VALUES))
        for d in decode(head, obj_threshold=0.0):
            assert 0.0 < d.b_x - d.c_x < 1.0
            assert 0.0 < d.b_y - d.c_y < 1.0
            assert d.b_w > 0 and d.b_l > 0
            assert -math.pi < d.b_theta <= math.pi
            assert 0.0 <= d.objectness <= 1.0
            assert 0 <= d.class_id < 8

    def test_theta_scale_invariance(self):
        head = make_head()
        s = slot(head, 0, 0, 0)
        s[4], s[5] = 0.3, -0.8
        base = decode(head, obj_threshold=0.4)[0].b_theta
        s[4], s[5] = 3 * 0.3, 3 * -0.8
        scaled = decode(head, obj_threshold=0.4)[0].b_theta
        assert scaled == pytest.approx(base, abs=1e-12)

    def test_bad_channel_count(self):
        with pytest.raises(DecodeError):
            decode(np.zeros((4, 4, 74)))

    def test_raw_prediction_matches(self):
        rng = np.random.default_rng(21)
        head = rng.normal(size=(6, 8, N_ANCHORS * VALUES))
        raw = raw_prediction_at(head, 2, 3, 1)
        assert raw.t_x == head[2, 3, VALUES + 0]
        assert raw.objectness_logit == head[2, 3, VALUES + 6]
        assert np.array_equal(raw.class_scores, head[2, 3, VALUES + 7 : 2 * VALUES])


class TestNms:
    def test_identical_boxes_one_survivor(self):
        a = make_detection(10, 0, 2, 4, 0.3, 0.9)
        b = make_detection(10, 0, 2, 4, 0.3, 0.8)
        assert nms([a, b]) == [a]

    def test_disjoint_kept(self):
        a = make_detection(10, 0, 2, 4, 0.0, 0.9)
        b = make_detection(40, 20, 2, 4, 0.0, 0.8)
        assert len(nms([a, b])) == 2

    def test_greedy_middle_wins(self):
        # middle overlaps both ends at IoU 0.6; ends are disjoint
        mid = make_detection(10.0, 0.0, 1.0, 1.0, 0.0, 0.9)
        left = make_detection(10.0, -0.25, 1.0, 1.0, 0.0, 0.8)
        right = make_detection(10.0, 0.25, 1.0, 1.0, 0.0, 0.7)
        from spikeyolo.evalkit import rotated_iou

        assert rotated_iou(mid.oriented_box(), left.oriented_box()) == pytest.approx(0.6)
        assert rotated_iou(mid.oriented_box(), right.oriented_box()) == pytest.approx(0.6)
        assert nms([left, mid, right], iou_threshold=0.4) == [mid]

    def test_classes_suppressed_independently(self):
        a = make_detection(10, 0, 2, 4, 0.0, 0.9, class_id=0)
        b = make_detection(10, 0, 2, 4, 0.0, 0.8, class_id=1)
        assert len(nms([a, b])) == 2

    def test_survivors_subset_with_low_pairwise_iou(self):
        from spikeyolo.evalkit import rotated_iou

        rng = np.random.default_rng(22)
        dets = [
            make_detection(
                rng.uniform(5, 25), rng.uniform(-10, 10),
                rng.uniform(1, 3), rng.uniform(2, 6),
                rng.uniform(-math.pi, math.pi), rng.uniform(0.1, 1.0),
                class_id=int(rng.integers(0, 2)),
            )
            for _ in range(40)
        ]
        kept = nms(dets, iou_threshold=0.4)
        assert all(d in dets for d in kept)
        for i, a in enumerate(kept):
            for b in kept[i + 1 :]:
                if a.class_id == b.class_id:
                    assert rotated_iou(a.oriented_box(), b.oriented_box()) < 0.4


class TestDocuments:
    def test_key_order_stable(self):
        det = make_detection(10.5, -3.25, 1.8, 4.2, 0.7, 0.93)
        text = detections_document("000123", [det])
        doc = json.loads(text)
        assert list(doc.keys()) == ["frame_id", "boxes"]
        assert list(doc["boxes"][0].keys()) == [
            "class", "objectness", "x_m", "y_m", "w_m", "l_m", "yaw_rad",
        ]
        assert doc["boxes"][0]["class"] == "Car"
        # byte-stable given identical inputs
        assert text == detections_document("000123", [det])

    def test_round_trip(self):
        det = make_detection(10.5, -3.25, 1.8, 4.2, 0.7, 0.93)
        frame, boxes = parse_frame_document(detections_document("f0", [det]))
        assert frame == "f0"
        assert boxes[0].class_name == "Car"
        assert boxes[0].score == pytest.approx(0.93)
        assert boxes[0].box.x == pytest.approx(10.5)

    def test_ground_truth_document(self):
        gt = GroundTruthBox(12.0, 3.0, 1.8, 4.0, 0.4, class_id=5)
        frame, boxes = parse_frame_document(ground_truth_document("f1", [gt]))
        assert boxes[0].class_name == DEFAULT_CLASS_NAMES[5]
        assert boxes[0].score is None

    def test_ground_truth_validation(self):
        with pytest.raises(ValueError):
            GroundTruthBox(0, 0, -1.0, 4.0, 0.0, 0)

    def test_anchor_validation(self):
        with pytest.raises(ValueError):
            AnchorPrior(0.0, 1.0)
