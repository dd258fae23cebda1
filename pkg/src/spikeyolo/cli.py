"""Command-line pipeline driver.

Subcommands: ``voxelize`` (cloud -> spike tensor), ``gen-weights``,
``infer`` (tensor -> detections + energy report), ``eval`` (AP over
document directories), and ``train-toy``.  Every run writes a JSON manifest
recording the command, seeds, per-stage wall-clock, and library versions.
All randomness enters through explicit ``--seed`` flags, and ``--threads``
(or the SPIKE_YOLO_THREADS variable) changes only the speed of a run, never
its outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import default_threads
from .config import NetworkSpec, builtin_config_text, load_config, parse_config
from .detection import decode, nms, write_detections_file
from .energy import PER_SPIKE_ENERGY_J, total_report, write_report
from .errors import SpikeYoloError, TrainingDiverged
from .evalkit import EvalConfig, average_precision, render_bev, write_ppm
from .loss import LossHyper
from .network import forward
from .pointcloud import filter_roi, parse_cloud
from .synthetic import SceneGenerator
from .train import TrainHyper, train_toy
from .voxelgrid import GridSpec, load_tensor, save_tensor, voxelize
from .weights import init_weights, load_weights_file, save_weights_file

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


class _Timings:
    def __init__(self) -> None:
        self.stages: dict[str, float] = {}
        self._last = time.perf_counter()

    def mark(self, stage: str) -> None:
        now = time.perf_counter()
        self.stages[stage] = round(now - self._last, 6)
        self._last = now


def _versions() -> dict[str, str]:
    import numba

    return {
        "spikeyolo": __version__,
        "numpy": np.__version__,
        "numba": numba.__version__,
        "python": ".".join(map(str, sys.version_info[:3])),
    }


def _write_manifest(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(p)
    return p


def _load_spec(ref: str) -> NetworkSpec:
    p = Path(ref)
    if p.is_file():
        return load_config(p)
    try:
        text = builtin_config_text(ref)
    except SpikeYoloError:
        raise FileNotFoundError(ref) from None
    return parse_config(text)


def _resolve_threads(value: int | None) -> int:
    return default_threads() if value is None else max(1, value)


def _parse_grid(text: str) -> GridSpec:
    dims = tuple(int(v) for v in text.lower().split("x"))
    if len(dims) != 3:
        raise SpikeYoloError(f"--grid must be LxWxC, got {text!r}")
    return GridSpec(dims=dims)  # type: ignore[arg-type]


def _cmd_voxelize(args: argparse.Namespace) -> int:
    timings = _Timings()
    blob = _require_file(args.input).read_bytes()
    cloud = parse_cloud(blob, frame_id=Path(args.input).stem)
    timings.mark("parse")
    grid = _parse_grid(args.grid)
    cloud = filter_roi(cloud, grid.roi)
    timings.mark("filter")
    tensor = voxelize(
        cloud, grid, seed=args.seed, normalize=args.normalize, empty_mode=args.empty_mode
    )
    timings.mark("voxelize")
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_tensor(tensor, out)
    timings.mark("write")
    _write_manifest(
        Path(args.manifest or f"{args.output}.manifest.json"),
        {
            "command": "voxelize",
            "input": str(args.input),
            "output": str(args.output),
            "grid": list(grid.dims),
            "empty_mode": args.empty_mode,
            "normalize": bool(args.normalize),
            "seeds": {"voxelize": args.seed},
            "points_kept": len(cloud),
            "timings_s": timings.stages,
            "versions": _versions(),
        },
    )
    return EXIT_OK


def _cmd_gen_weights(args: argparse.Namespace) -> int:
    timings = _Timings()
    spec = _load_spec(args.config)
    timings.mark("config")
    store = init_weights(spec, args.seed)
    timings.mark("init")
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_weights_file(store, out)
    timings.mark("write")
    _write_manifest(
        Path(args.manifest or f"{args.output}.manifest.json"),
        {
            "command": "gen-weights",
            "config": str(args.config),
            "output": str(args.output),
            "seeds": {"weights": args.seed},
            "layers": [{"index": l.index, "kind": l.kind} for l in spec.layers],
            "timings_s": timings.stages,
            "versions": _versions(),
        },
    )
    return EXIT_OK


def _cmd_infer(args: argparse.Namespace) -> int:
    timings = _Timings()
    threads = _resolve_threads(args.threads)
    spec = _load_spec(args.config)
    store = load_weights_file(_require_file(args.weights), spec)
    tensor = load_tensor(_require_file(args.tensor))
    timings.mark("load")
    result = forward(spec, store, tensor, threads=threads, t_cap=args.t_cap)
    timings.mark("forward")
    detections = decode(result.head, spec.anchors, obj_threshold=args.obj_threshold)
    detections = nms(detections, iou_threshold=args.nms_threshold)
    timings.mark("decode")
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame_id = Path(args.tensor).stem
    write_detections_file(out, frame_id, detections)
    report = total_report(result.stats, per_spike_energy=args.per_spike_energy)
    if args.energy_report:
        Path(args.energy_report).parent.mkdir(parents=True, exist_ok=True)
        write_report(report, args.energy_report)
    if args.render:
        img = render_bev(tensor, [d.oriented_box() for d in detections])
        Path(args.render).parent.mkdir(parents=True, exist_ok=True)
        write_ppm(img, args.render)
    timings.mark("write")
    _write_manifest(
        Path(args.manifest or f"{args.output}.manifest.json"),
        {
            "command": "infer",
            "config": str(args.config),
            "weights": str(args.weights),
            "tensor": str(args.tensor),
            "output": str(args.output),
            "energy_report": args.energy_report,
            "render": args.render,
            "threads": threads,
            "obj_threshold": args.obj_threshold,
            "nms_threshold": args.nms_threshold,
            "t_cap": result.t_cap,
            "detections": len(detections),
            "layers": [{"index": l.index, "kind": l.kind} for l in spec.layers],
            "sparsity_total": report.s_total,
            "energy_joules": report.energy_joules,
            "timings_s": timings.stages,
            "versions": _versions(),
        },
    )
    return EXIT_OK


def _read_frame_dir(directory: Path) -> dict:
    from .detection import read_frame_file

    frames = {}
    for path in sorted(directory.glob("*.json")):
        frame_id, boxes = read_frame_file(path)
        frames[frame_id or path.stem] = boxes
    return frames


def _cmd_eval(args: argparse.Namespace) -> int:
    timings = _Timings()
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    if not gt_dir.is_dir():
        raise FileNotFoundError(gt_dir)
    if not pred_dir.is_dir():
        raise FileNotFoundError(pred_dir)
    detections = _read_frame_dir(pred_dir)
    ground_truth = _read_frame_dir(gt_dir)
    if not any(detections.values()):
        print(f"warning: no detections found under {pred_dir}", file=sys.stderr)
    thresholds = dict(EvalConfig().iou_thresholds)
    for spec in args.iou_threshold or []:
        name, _, value = spec.partition("=")
        if not value:
            raise SpikeYoloError(f"--iou-threshold expects NAME=VALUE, got {spec!r}")
        thresholds[name] = float(value)
    cfg = EvalConfig(iou_thresholds=thresholds, default_threshold=args.default_iou)
    timings.mark("load")
    aps = average_precision(detections, ground_truth, cfg)
    timings.mark("evaluate")
    if not aps:
        print("warning: ground truth names no classes; nothing to evaluate", file=sys.stderr)
    for name in sorted(aps):
        print(f"AP {name}: {aps[name]:.4f}")
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(
            json.dumps({"ap": {k: round(v, 6) for k, v in sorted(aps.items())}}, indent=2)
            + "\n"
        )
    _write_manifest(
        Path(args.manifest or "eval.manifest.json"),
        {
            "command": "eval",
            "pred": str(pred_dir),
            "gt": str(gt_dir),
            "frames_pred": len(detections),
            "frames_gt": len(ground_truth),
            "ap": {k: round(v, 6) for k, v in sorted(aps.items())},
            "timings_s": timings.stages,
            "versions": _versions(),
        },
    )
    return EXIT_OK


def _cmd_train_toy(args: argparse.Namespace) -> int:
    timings = _Timings()
    threads = _resolve_threads(args.threads)
    spec = _load_spec(args.config)
    lr_warmup = args.lr_warmup if args.lr_warmup is not None else min(5e-5, args.lr)
    hyper = TrainHyper(
        iterations=args.iterations,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        lr_warmup=lr_warmup,
        lr=args.lr,
        warmup_iterations=args.warmup_iterations,
        t_cap=args.t_cap,
        loss=LossHyper(obj_target=args.obj_target),
    )
    scenes = SceneGenerator(seed=args.scene_seed)
    timings.mark("setup")
    result = train_toy(spec, scenes, hyper, seed=args.seed, threads=threads)
    timings.mark("train")
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_weights_file(result.weights, out)
    if args.trace:
        Path(args.trace).parent.mkdir(parents=True, exist_ok=True)
        Path(args.trace).write_text("".join(f"{v:.9f}\n" for v in result.trace))
    timings.mark("write")
    first = result.trace[0] if result.trace else float("nan")
    last = result.trace[-1] if result.trace else float("nan")
    print(f"trained {len(result.trace)} iterations: loss {first:.4f} -> {last:.4f}")
    _write_manifest(
        Path(args.manifest or f"{args.output}.manifest.json"),
        {
            "command": "train-toy",
            "config": str(args.config),
            "output": str(args.output),
            "trace": args.trace,
            "seeds": {"weights": args.seed, "scenes": args.scene_seed},
            "threads": threads,
            "iterations": args.iterations,
            "lr": args.lr,
            "lr_warmup": lr_warmup,
            "momentum": args.momentum,
            "weight_decay": args.weight_decay,
            "loss_first": first,
            "loss_last": last,
            "timings_s": timings.stages,
            "versions": _versions(),
        },
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikeyolo",
        description="Temporal-coding spiking detector pipeline over LiDAR clouds",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("voxelize", help="convert a velodyne .bin scan to a spike tensor")
    p.add_argument("input", help="point-cloud .bin file")
    p.add_argument("output", help="spike-tensor output path")
    p.add_argument("--grid", default="768x1024x21", help="grid dims LxWxC")
    p.add_argument("--empty-mode", choices=("paper-literal", "sentinel"), default="paper-literal")
    p.add_argument("--normalize", action="store_true", help="scale times into [0, 1]")
    p.add_argument("--seed", type=int, default=0, help="per-voxel selection seed")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_voxelize)

    p = sub.add_parser("gen-weights", help="write a deterministic weight file")
    p.add_argument("--config", required=True, help="config path or builtin name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_gen_weights)

    p = sub.add_parser("infer", help="run the network and decode detections")
    p.add_argument("--config", required=True, help="config path or builtin name")
    p.add_argument("--weights", required=True)
    p.add_argument("--tensor", required=True)
    p.add_argument("--output", required=True, help="detections document path")
    p.add_argument("--obj-threshold", type=float, default=0.5)
    p.add_argument("--nms-threshold", type=float, default=0.4)
    p.add_argument("--energy-report", default=None)
    p.add_argument("--render", default=None, help="write a BEV raster (.ppm)")
    p.add_argument("--per-spike-energy", type=float, default=PER_SPIKE_ENERGY_J)
    p.add_argument("--t-cap", type=float, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="average precision over document directories")
    p.add_argument("--pred", required=True, help="directory of detection documents")
    p.add_argument("--gt", required=True, help="directory of ground-truth documents")
    p.add_argument(
        "--iou-threshold",
        action="append",
        metavar="NAME=VALUE",
        help="override a per-class IoU threshold (repeatable)",
    )
    p.add_argument("--default-iou", type=float, default=0.5)
    p.add_argument("--output", default=None, help="optional AP summary path")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("train-toy", help="train the reduced network on synthetic scenes")
    p.add_argument("--config", default="toy.cfg")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--lr-warmup", type=float, default=None)
    p.add_argument("--warmup-iterations", type=int, default=25)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--t-cap", type=float, default=4.0)
    p.add_argument("--obj-target", choices=("iou", "one"), default="iou")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--output", required=True, help="trained weight file path")
    p.add_argument("--trace", default=None, help="loss-trace output path")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_train_toy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"error: TrainingDiverged: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SpikeYoloError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
