"""Rotated-box IoU, average precision, and the birds-eye-view raster.

Scores a small set of detections against ground truth under the per-class
IoU thresholds (0.7 for Car, 0.5 otherwise) and renders the scene with
ground truth in green and detections in red.
"""

from spikeyolo.evalkit import (
    EvalBox,
    EvalConfig,
    OrientedBox,
    average_precision,
    render_bev,
    rotated_iou,
    write_ppm,
)
from spikeyolo.synthetic import SceneGenerator

a = OrientedBox(10.0, 0.0, 2.0, 4.5, 0.3)
b = OrientedBox(10.5, 0.3, 2.0, 4.5, 0.5)
print(f"overlapping boxes: IoU = {rotated_iou(a, b):.4f}")
print(f"same box twice:    IoU = {rotated_iou(a, a):.4f}")

scene = SceneGenerator(seed=8).sample(0)
gt = scene.boxes[0]
gt_box = gt.oriented_box()

# Three detections: a near-perfect hit, a misplaced duplicate, a far miss.
hit = OrientedBox(gt.x_m + 0.1, gt.y_m - 0.1, gt.w_m, gt.l_m, gt.yaw + 0.02)
dup = OrientedBox(gt.x_m + 1.5, gt.y_m + 1.0, gt.w_m, gt.l_m, gt.yaw)
miss = OrientedBox(50.0, 30.0, 2.0, 4.0, -1.0)
detections = {
    scene.cloud.frame_id: [
        EvalBox("Car", 0.95, hit),
        EvalBox("Car", 0.60, dup),
        EvalBox("Car", 0.40, miss),
    ]
}
ground_truth = {scene.cloud.frame_id: [EvalBox("Car", None, gt_box)]}

for name, box in (("hit", hit), ("dup", dup), ("miss", miss)):
    print(f"  {name}: IoU vs ground truth = {rotated_iou(box, gt_box):.3f}")

aps = average_precision(detections, ground_truth, EvalConfig())
print(f"AP (11-point, Car threshold 0.7): {aps['Car']:.4f}")

img = render_bev(scene.tensor, [hit, dup, miss], [gt_box])
write_ppm(img, "demo_bev.ppm")
print(f"wrote demo_bev.ppm ({img.shape[1]}x{img.shape[0]} P6 pixmap)")
