"""End-to-end inference on the reduced network.

Voxelized scene -> spiking stack -> detection head -> oriented boxes, with
the per-layer spike counts that drive the energy estimate.  Pass --full to
run the full-size 18-layer graph instead (takes a few minutes).
"""

import sys

from spikeyolo.config import builtin_config
from spikeyolo.detection import DEFAULT_CLASS_NAMES, decode, detections_document, nms
from spikeyolo.energy import report_document, total_report
from spikeyolo.network import forward
from spikeyolo.synthetic import SceneGenerator, TOY_GRID
from spikeyolo.voxelgrid import GridSpec
from spikeyolo.weights import init_weights

full = "--full" in sys.argv
config_name = "table1.cfg" if full else "toy.cfg"
spec = builtin_config(config_name)
grid = GridSpec() if full else TOY_GRID
print(f"config {config_name}: {len(spec.layers)} layers, "
      f"{'with' if spec.skip_connections else 'no'} skip connection")

scene = SceneGenerator(seed=4, grid=grid).sample(0)
print(f"scene: one object at ({scene.boxes[0].x_m:.1f}, {scene.boxes[0].y_m:.1f}) m, "
      f"yaw {scene.boxes[0].yaw:.2f} rad")

weights = init_weights(spec, seed=7)
result = forward(spec, weights, scene.tensor, threads=2)
print(f"head tensor: {result.head.shape}; NO_SPIKE cap used: {result.t_cap:.3f}")

print("spiking activity per layer:")
for stat in result.stats:
    print(f"  layer {stat.layer_index:2d}: {stat.fired:8d}/{stat.size:8d} fired "
          f"({100 * stat.fired / stat.size:.2f}%)")

report = total_report(result.stats)
print(f"network sparsity {100 * report.s_total:.2f}%, energy "
      f"{report.energy_joules * 1e3:.4f} mJ at 19 pJ/spike")

detections = nms(decode(result.head, spec.anchors, obj_threshold=0.5))
print(f"\n{len(detections)} detections above objectness 0.5 after suppression")
for d in detections[:5]:
    print(f"  {DEFAULT_CLASS_NAMES[d.class_id]:12s} obj={d.objectness:.2f} "
          f"at ({d.x_m:.1f}, {d.y_m:.1f}) m, {d.w_m:.1f}x{d.l_m:.1f} m, "
          f"yaw {d.b_theta:+.2f}")
print("\n(untrained weights: boxes are arbitrary; see 04_toy_training.py)")

with open("demo_detections.json", "w") as fh:
    fh.write(detections_document(scene.cloud.frame_id, detections))
with open("demo_energy.json", "w") as fh:
    fh.write(report_document(report))
print("wrote demo_detections.json, demo_energy.json")
