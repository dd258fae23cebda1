"""Forward execution of a layer graph over a spike-time tensor.

Layers run in config order; route layers read earlier outputs by index, and
the terminal linear conv consumes spike times with ``NO_SPIKE`` mapped to a
large finite cap.  Fired/silent counts are collected for every spiking layer
as the raw material for sparsity and energy accounting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkSpec
from .errors import LayerShapeError
from .layers import (
    LayerStats,
    cap_no_spike,
    linear_conv_forward,
    min_time_pool,
    reorg,
    route,
    spike_conv_forward,
)
from .neuron import DEFAULT_CONFIG, NeuronConfig
from .voxelgrid import SpikeTensor
from .weights import WeightStore


@dataclass
class ForwardResult:
    """Detection-head tensor plus per-spiking-layer statistics.

    In record mode every intermediate tensor, pool winner map, and causal
    count is retained for the backward pass.
    """

    head: np.ndarray
    stats: list[LayerStats]
    t_cap: float
    activations: dict[int, SpikeTensor] | None = None
    pool_argmins: dict[int, np.ndarray] | None = None
    causal_counts: dict[int, np.ndarray] | None = None


def _layer_params(weights, index: int) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(weights, WeightStore):
        kernel = np.asarray(weights.kernels[index], dtype=np.float64)
        bias = weights.biases.get(index)
        return kernel, None if bias is None else np.asarray(bias, dtype=np.float64)
    kernel, bias = weights[index]
    return np.asarray(kernel, dtype=np.float64), bias


def _last_uses(spec: NetworkSpec) -> dict[int, int]:
    last = {}
    for layer in spec.layers:
        sources = layer.route_sources or (layer.index - 1,)
        for src in sources:
            last[src] = layer.index
    return last


def forward(
    spec: NetworkSpec,
    weights,
    input: SpikeTensor,
    cfg: NeuronConfig = DEFAULT_CONFIG,
    threads: int | None = 1,
    t_cap: float | None = None,
    record: bool = False,
) -> ForwardResult:
    """Run the network; returns the head tensor and layer statistics.

    ``weights`` is a :class:`WeightStore` or a ``{index: (kernel, bias)}``
    dict of float64 arrays (the trainer's master copy).  Results are
    identical for every ``threads`` value.
    """
    if tuple(input.dims) != tuple(spec.input_shape):
        raise LayerShapeError(
            f"input dims {tuple(input.dims)} != config input {tuple(spec.input_shape)}"
        )
    acts: dict[int, SpikeTensor] = {0: input}
    pool_argmins: dict[int, np.ndarray] = {}
    causal_counts: dict[int, np.ndarray] = {}
    stats: list[LayerStats] = []
    head: np.ndarray | None = None
    t_cap_used = 0.0
    last_use = _last_uses(spec)

    for layer in spec.layers:
        prev = acts[layer.index - 1]
        if layer.kind == "spike_conv":
            kernel, _ = _layer_params(weights, layer.index)
            st = LayerStats(layer_index=layer.index)
            out = spike_conv_forward(
                prev, kernel, cfg, stats=st, threads=threads, record_causal=record
            )
            if record:
                out, cc = out
                causal_counts[layer.index] = cc
            stats.append(st)
            acts[layer.index] = out
        elif layer.kind == "maxpool":
            out = min_time_pool(prev, layer.kernel, layer.stride, return_argmin=record)
            if record:
                out, amin = out
                pool_argmins[layer.index] = amin
            acts[layer.index] = out
        elif layer.kind == "reorg":
            acts[layer.index] = reorg(prev, layer.stride)
        elif layer.kind == "route":
            acts[layer.index] = route([acts[s] for s in layer.route_sources])
        elif layer.kind == "conv":
            kernel, bias = _layer_params(weights, layer.index)
            capped, t_cap_used = cap_no_spike(prev.values, t_cap)
            head = linear_conv_forward(capped, kernel, bias)
        else:  # pragma: no cover - parser rejects unknown kinds
            raise LayerShapeError(f"cannot execute layer kind {layer.kind!r}")

        if not record:
            for idx in [i for i in acts if last_use.get(i, 0) <= layer.index]:
                del acts[idx]

    if head is None:
        raise LayerShapeError("config has no terminal conv layer; nothing to decode")
    return ForwardResult(
        head=head,
        stats=stats,
        t_cap=t_cap_used,
        activations=acts if record else None,
        pool_argmins=pool_argmins if record else None,
        causal_counts=causal_counts if record else None,
    )
