"""Backward pass through the spiking stack and a desk-scale SGD trainer.

Gradients flow from the head loss through the linear conv (standard
backprop), into spike times via the closed-form sensitivities, through
min-pools to their winning inputs, and through reorg/route as permutations.
Silent (``NO_SPIKE``) outputs propagate nothing.

Training runs on the reduced config with stochastic gradient descent,
momentum 0.9 and weight decay 5e-4, warming the learning rate up from 5e-5
before settling at 5e-4.  The trainer keeps float64 master weights; saved
stores quantize to the float32 file format.  The head cap for ``NO_SPIKE``
values is a fixed constant during training so the loss stays an exact,
differentiable function of the weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import NetworkSpec
from .errors import TrainingDiverged
from .layers import (
    linear_conv_backward,
    min_time_pool_backward,
    reorg_backward,
    spike_conv_backward,
)
from .loss import LossHyper, Targets, assign_targets, yolo_loss_grad
from .network import ForwardResult, forward
from .neuron import DEFAULT_CONFIG, NeuronConfig
from .synthetic import Scene, SceneGenerator
from .voxelgrid import SpikeTensor
from .weights import WeightStore, init_param_arrays, store_from_arrays

Params = dict[int, tuple[np.ndarray, np.ndarray | None]]


@dataclass(frozen=True)
class TrainHyper:
    iterations: int = 200
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_warmup: float = 5e-5
    lr: float = 5e-4
    warmup_iterations: int = 25
    t_cap: float = 4.0
    loss: LossHyper = field(default_factory=LossHyper)

    def lr_at(self, iteration: int) -> float:
        return self.lr_warmup if iteration < self.warmup_iterations else self.lr


@dataclass
class TrainResult:
    params: Params
    weights: WeightStore
    trace: list[float]


def sgd_step(
    param: np.ndarray,
    velocity: np.ndarray,
    grad: np.ndarray | float,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> None:
    """In-place momentum update: v = mu v - lr (g + wd p); p += v."""
    velocity *= momentum
    velocity -= lr * (grad + weight_decay * param)
    param += velocity


def _accumulate(grads: dict[int, np.ndarray], index: int, value: np.ndarray) -> None:
    if index in grads:
        grads[index] = grads[index] + value
    else:
        grads[index] = value


def backward(
    spec: NetworkSpec,
    params: Params,
    result: ForwardResult,
    grad_head: np.ndarray,
    cfg: NeuronConfig = DEFAULT_CONFIG,
    threads: int | None = 1,
) -> dict[int, tuple[np.ndarray, np.ndarray | None]]:
    """Parameter gradients for a recorded forward pass."""
    if result.activations is None:
        raise ValueError("backward needs a forward(..., record=True) result")
    acts = result.activations
    grad_of: dict[int, np.ndarray] = {}
    grads: dict[int, tuple[np.ndarray, np.ndarray | None]] = {}

    final = spec.layers[-1]
    if final.kind != "conv":
        raise ValueError("backward expects a terminal conv layer")
    conv_in = acts[final.index - 1].values
    capped = np.where(np.isfinite(conv_in), conv_in, result.t_cap)
    kernel, _bias = params[final.index]
    gx, gk, gb = linear_conv_backward(capped, kernel, grad_head)
    gx[~np.isfinite(conv_in)] = 0.0  # the cap is a constant, not a spike time
    grads[final.index] = (gk, gb)
    grad_of[final.index - 1] = gx

    for layer in reversed(spec.layers[:-1]):
        gout = grad_of.pop(layer.index, None)
        if gout is None:
            continue
        if layer.kind == "spike_conv":
            gin, gk = spike_conv_backward(
                acts[layer.index - 1],
                params[layer.index][0],
                acts[layer.index],
                gout,
                cfg,
                threads=threads,
                need_input_grad=layer.index > 1,
            )
            grads[layer.index] = (gk, None)
            if gin is not None:
                _accumulate(grad_of, layer.index - 1, gin)
        elif layer.kind == "maxpool":
            gin = min_time_pool_backward(
                gout,
                result.pool_argmins[layer.index],
                acts[layer.index - 1].values.shape,
                layer.kernel,
            )
            _accumulate(grad_of, layer.index - 1, gin)
        elif layer.kind == "reorg":
            _accumulate(grad_of, layer.index - 1, reorg_backward(gout, layer.stride))
        elif layer.kind == "route":
            offset = 0
            for src in layer.route_sources:
                channels = acts[src].values.shape[2]
                _accumulate(grad_of, src, gout[:, :, offset : offset + channels])
                offset += channels
    return grads


def train_toy(
    spec: NetworkSpec,
    scenes: SceneGenerator,
    hyper: TrainHyper = TrainHyper(),
    seed: int = 0,
    cfg: NeuronConfig = DEFAULT_CONFIG,
    threads: int | None = 1,
    progress: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """SGD over synthetic scenes; returns weights and the loss trace.

    Raises :class:`TrainingDiverged` as soon as the loss stops being finite.
    """
    params: Params = init_param_arrays(spec, seed)
    velocity = {
        i: (np.zeros_like(k), None if b is None else np.zeros_like(b))
        for i, (k, b) in params.items()
    }
    trace: list[float] = []
    for it in range(hyper.iterations):
        scene = scenes.sample(it)
        result = forward(
            spec, params, scene.tensor, cfg, threads=threads, t_cap=hyper.t_cap, record=True
        )
        targets = assign_targets(
            scene.boxes, result.head.shape[:2], spec.anchors, scenes.grid.roi
        )
        breakdown, grad_head = yolo_loss_grad(result.head, targets, hyper.loss, spec.anchors)
        total = breakdown.total
        if not math.isfinite(total):
            raise TrainingDiverged(f"loss became {total} at iteration {it}")
        trace.append(total)
        if progress is not None:
            progress(it, total)

        grads = backward(spec, params, result, grad_head, cfg, threads=threads)
        lr = hyper.lr_at(it)
        for index, (kernel, bias) in params.items():
            gk, gb = grads.get(index, (None, None))
            vk, vb = velocity[index]
            sgd_step(kernel, vk, gk if gk is not None else 0.0, lr, hyper.momentum, hyper.weight_decay)
            if bias is not None:
                sgd_step(bias, vb, gb if gb is not None else 0.0, lr, hyper.momentum, hyper.weight_decay)
    return TrainResult(params=params, weights=store_from_arrays(params), trace=trace)


@dataclass
class GradCheckResult:
    checked: int
    passed: int
    boundary: int
    worst_rel_err: float

    @property
    def pass_fraction(self) -> float:
        return self.passed / self.checked if self.checked else 1.0


def _loss_for(
    spec: NetworkSpec,
    params: Params,
    tensor: SpikeTensor,
    targets: Targets,
    hyper: TrainHyper,
    cfg: NeuronConfig,
) -> tuple[float, ForwardResult]:
    result = forward(spec, params, tensor, cfg, threads=1, t_cap=hyper.t_cap, record=True)
    breakdown, _ = yolo_loss_grad(
        result.head, targets, hyper.loss, spec.anchors, need_grad=False
    )
    return breakdown.total, result


def _same_discrete_state(a: ForwardResult, b: ForwardResult) -> bool:
    """True when two passes fired the same neurons with the same causal sets
    and pool winners — i.e. no probe crossed a causal-set boundary."""
    for idx, cc in a.causal_counts.items():
        if not np.array_equal(cc, b.causal_counts[idx]):
            return False
    for idx, am in a.pool_argmins.items():
        if not np.array_equal(am, b.pool_argmins[idx]):
            return False
    return True


def gradient_check(
    spec: NetworkSpec,
    params: Params,
    scene: Scene,
    hyper: TrainHyper | None = None,
    n_probes: int = 100,
    seed: int = 0,
    step: float = 1e-5,
    rel_tol: float = 1e-3,
    cfg: NeuronConfig = DEFAULT_CONFIG,
    roi=None,
) -> GradCheckResult:
    """Compare analytic weight gradients against central finite differences.

    Probes that flip a causal set, a fired/silent state, or a pool winner
    are counted as boundary cases and excluded from the pass rate (the loss
    is not differentiable there).  Uses the constant-objectness loss so the
    finite differences probe exactly the differentiated function.
    """
    if hyper is None:
        hyper = TrainHyper(loss=LossHyper(obj_target="one"))
    if roi is None:
        from .pointcloud import DEFAULT_ROI

        roi = DEFAULT_ROI
    targets = assign_targets(scene.boxes, spec.layers[-1].output_shape[:2], spec.anchors, roi)
    result = forward(spec, params, scene.tensor, cfg, threads=1, t_cap=hyper.t_cap, record=True)
    breakdown, grad_head = yolo_loss_grad(result.head, targets, hyper.loss, spec.anchors)
    grads = backward(spec, params, result, grad_head, cfg, threads=1)

    rng = np.random.default_rng(seed)
    param_indices = sorted(params)
    checked = passed = boundary = 0
    worst = 0.0
    while checked + boundary < n_probes:
        layer_index = int(rng.choice(param_indices))
        kernel, _ = params[layer_index]
        flat = int(rng.integers(kernel.size))
        original = kernel.flat[flat]
        kernel.flat[flat] = original + step
        up, res_up = _loss_for(spec, params, scene.tensor, targets, hyper, cfg)
        kernel.flat[flat] = original - step
        down, res_down = _loss_for(spec, params, scene.tensor, targets, hyper, cfg)
        kernel.flat[flat] = original
        if not _same_discrete_state(res_up, res_down):
            boundary += 1
            continue
        fd = (up - down) / (2.0 * step)
        analytic = grads[layer_index][0].flat[flat]
        err = abs(analytic - fd)
        rel = err / max(abs(analytic), abs(fd), 1e-8)
        checked += 1
        if rel <= rel_tol or err <= 1e-9:
            passed += 1
        worst = max(worst, rel)
    return GradCheckResult(checked=checked, passed=passed, boundary=boundary, worst_rel_err=worst)
