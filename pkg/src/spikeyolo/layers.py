"""Layer primitives: spiking convolution, min-time pooling, reorg, route,
and the plain linear convolution used by the detection head.

Spike times flow between layers as :class:`SpikeTensor` values; the earliest
spike is the strongest activation, so "max" pooling on activation strength is
a minimum over times.  All layer outputs are computed per neuron with no
shared mutable state, so row blocks can be fanned out over threads without
affecting the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._parallel import run_blocks
from .errors import LayerShapeError
from .neuron import DEFAULT_CONFIG, NeuronConfig
from .voxelgrid import NO_SPIKE, SpikeTensor


@dataclass
class LayerStats:
    """Fired / silent neuron counts for one spiking layer."""

    layer_index: int = 0
    fired: int = 0
    silent: int = 0

    @property
    def size(self) -> int:
        return self.fired + self.silent

    def add(self, fired: int, silent: int) -> None:
        self.fired += fired
        self.silent += silent


def _as_kernel4(kernel: np.ndarray) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4:
        raise LayerShapeError(f"kernel must be (kh, kw, c_in, filters), got {kernel.shape}")
    return kernel


def spike_conv_forward(
    input: SpikeTensor,
    kernel: np.ndarray,
    cfg: NeuronConfig = DEFAULT_CONFIG,
    stats: LayerStats | None = None,
    threads: int | None = 1,
    record_causal: bool = False,
):
    """Same-padding stride-1 spiking convolution.

    Every output neuron runs the closed-form first-crossing solve over its
    k x k x c_in receptive field; padded positions contribute ``NO_SPIKE``
    inputs, which never enter a causal set.  Returns the output tensor, or
    ``(tensor, causal_counts)`` when ``record_causal`` is set.
    """
    kernel = _as_kernel4(kernel)
    kh, kw, c_in, filters = kernel.shape
    l_in, w_in, c_tensor = input.values.shape
    if c_in != c_tensor:
        raise LayerShapeError(f"kernel depth {c_in} != input channels {c_tensor}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise LayerShapeError(f"same-padding needs odd kernel dims, got {kh}x{kw}")
    pad_h, pad_w = kh // 2, kw // 2
    padded = np.pad(
        input.values, ((pad_h, pad_h), (pad_w, pad_w), (0, 0)), constant_values=NO_SPIKE
    )
    w2d = np.ascontiguousarray(kernel.reshape(kh * kw * c_in, filters))
    out = np.empty((l_in, w_in, filters), dtype=np.float64)
    cc = np.empty((l_in, w_in, filters), dtype=np.int64) if record_causal else np.empty(
        (1, 1, 1), dtype=np.int64
    )
    run_blocks(
        lambda a, b: _kernels.spike_conv_rows(
            padded, w2d, cfg.threshold, cfg.tau_syn, out, cc, record_causal, a, b, kh, kw
        ),
        l_in,
        threads,
    )
    result = SpikeTensor(out)
    if stats is not None:
        fired = int(np.count_nonzero(np.isfinite(out)))
        stats.add(fired, out.size - fired)
    if record_causal:
        return result, cc
    return result


def spike_conv_backward(
    input: SpikeTensor,
    kernel: np.ndarray,
    output: SpikeTensor,
    grad_output: np.ndarray,
    cfg: NeuronConfig = DEFAULT_CONFIG,
    threads: int | None = 1,
    need_input_grad: bool = True,
) -> tuple[np.ndarray | None, np.ndarray]:
    """Gradients of a spiking convolution in the time domain.

    Uses dt_out/dw_i = tau (z_i - z_out)/Z and dt_out/dt_i = w_i z_i / Z over
    the strictly-causal set of each fired output; silent outputs propagate
    nothing.  Returns ``(grad_input, grad_kernel)``.
    """
    kernel = _as_kernel4(kernel)
    kh, kw, c_in, filters = kernel.shape
    tau = cfg.tau_syn
    pad_h, pad_w = kh // 2, kw // 2
    tin = input.values
    tin_pad = np.pad(tin, ((pad_h, pad_h), (pad_w, pad_w), (0, 0)), constant_values=NO_SPIKE)
    with np.errstate(over="ignore"):
        zin = np.exp(tin / tau)
        zin_pad = np.exp(tin_pad / tau)
    out_t = output.values
    gout = np.ascontiguousarray(grad_output, dtype=np.float64)
    if gout.shape != out_t.shape:
        raise LayerShapeError(f"grad shape {gout.shape} != output shape {out_t.shape}")
    w2d = np.ascontiguousarray(kernel.reshape(kh * kw * c_in, filters))

    zden = np.empty_like(out_t)
    run_blocks(
        lambda a, b: _kernels.spike_conv_denoms(
            tin_pad, zin_pad, out_t, w2d, a, b, kh, kw, zden
        ),
        out_t.shape[0],
        threads,
    )
    gw2d = np.zeros_like(w2d)
    run_blocks(
        lambda a, b: _kernels.spike_conv_grad_weights(
            tin_pad, zin_pad, out_t, gout, zden, tau, gw2d, a, b, kh, kw
        ),
        filters,
        threads,
    )
    grad_kernel = gw2d.reshape(kernel.shape)
    grad_input = None
    if need_input_grad:
        grad_input = np.empty_like(tin)
        run_blocks(
            lambda a, b: _kernels.spike_conv_grad_inputs(
                tin, zin, out_t, gout, w2d, zden, grad_input, a, b, kh, kw
            ),
            tin.shape[0],
            threads,
        )
    return grad_input, grad_kernel


def min_time_pool(
    input: SpikeTensor, window: int = 2, stride: int = 2, return_argmin: bool = False
):
    """Earliest spike per non-overlapping spatial window.

    ``NO_SPIKE`` survives only if the whole window is silent.  With
    ``return_argmin`` also returns the flat in-window winner index
    (first-minimum tie break) for gradient routing.
    """
    if window != stride:
        raise LayerShapeError(f"pooling supports window == stride only, got {window}/{stride}")
    l_in, w_in, c = input.values.shape
    if l_in % window or w_in % window:
        raise LayerShapeError(f"dims {l_in}x{w_in} not divisible by window {window}")
    blocks = input.values.reshape(l_in // window, window, w_in // window, window, c)
    windows = blocks.transpose(0, 2, 4, 1, 3).reshape(
        l_in // window, w_in // window, c, window * window
    )
    out = SpikeTensor(windows.min(axis=3))
    if return_argmin:
        return out, windows.argmin(axis=3)
    return out


def min_time_pool_backward(
    grad_output: np.ndarray, argmin: np.ndarray, input_shape: tuple[int, int, int], window: int = 2
) -> np.ndarray:
    """Route each pooled gradient back to the window element that won."""
    l_in, w_in, c = input_shape
    gwin = np.zeros((l_in // window, w_in // window, c, window * window), dtype=np.float64)
    np.put_along_axis(gwin, argmin[..., None], grad_output[..., None], axis=3)
    blocks = gwin.reshape(l_in // window, w_in // window, c, window, window)
    return blocks.transpose(0, 3, 1, 4, 2).reshape(l_in, w_in, c)


def reorg(input: SpikeTensor, stride: int = 2) -> SpikeTensor:
    """Space-to-depth: each ``stride x stride`` spatial block of C channels
    becomes one cell of ``stride**2 * C`` channels.

    Channel order is block-position-major: output channel
    ``(bi*stride + bj)*C + c`` holds input ``(i*stride + bi, j*stride + bj, c)``.
    A pure permutation; the value multiset is preserved exactly.
    """
    l_in, w_in, c = input.values.shape
    if l_in % stride or w_in % stride:
        raise LayerShapeError(f"dims {l_in}x{w_in} not divisible by stride {stride}")
    s = stride
    blocks = input.values.reshape(l_in // s, s, w_in // s, s, c)
    out = blocks.transpose(0, 2, 1, 3, 4).reshape(l_in // s, w_in // s, s * s * c)
    return SpikeTensor(out.copy())


def reorg_backward(grad_output: np.ndarray, stride: int = 2) -> np.ndarray:
    """Inverse permutation of :func:`reorg` applied to a gradient."""
    l_out, w_out, c_out = grad_output.shape
    s = stride
    c = c_out // (s * s)
    blocks = grad_output.reshape(l_out, w_out, s, s, c)
    return blocks.transpose(0, 2, 1, 3, 4).reshape(l_out * s, w_out * s, c).copy()


def route(inputs: list[SpikeTensor]) -> SpikeTensor:
    """Channel-wise concatenation of same-sized feature maps, in list order."""
    if not inputs:
        raise LayerShapeError("route needs at least one source")
    spatial = inputs[0].values.shape[:2]
    for t in inputs[1:]:
        if t.values.shape[:2] != spatial:
            raise LayerShapeError(
                f"route spatial mismatch: {t.values.shape[:2]} vs {spatial}"
            )
    if len(inputs) == 1:
        return SpikeTensor(inputs[0].values.copy())
    return SpikeTensor(np.concatenate([t.values for t in inputs], axis=2))


def cap_no_spike(values: np.ndarray, t_cap: float | None = None) -> tuple[np.ndarray, float]:
    """Replace ``NO_SPIKE`` entries by a large finite constant.

    Default cap is twice the largest finite time in the tensor (1.0 if the
    tensor is entirely silent).  Returns the capped copy and the cap used.
    """
    finite = np.isfinite(values)
    if t_cap is None:
        t_cap = 2.0 * float(values[finite].max()) if finite.any() else 1.0
    capped = np.where(finite, values, t_cap)
    return capped, float(t_cap)


def linear_conv_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """1x1 convolution with identity activation over a real-valued tensor."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 4:
        if kernel.shape[0] != 1 or kernel.shape[1] != 1:
            raise LayerShapeError(f"linear conv supports 1x1 kernels, got {kernel.shape}")
        kernel = kernel[0, 0]
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != kernel.shape[0]:
        raise LayerShapeError(f"input {x.shape} incompatible with kernel {kernel.shape}")
    bias = np.asarray(bias, dtype=np.float64)
    if bias.shape != (kernel.shape[1],):
        raise LayerShapeError(f"bias shape {bias.shape} != ({kernel.shape[1]},)")
    return np.einsum("lwc,cf->lwf", x, kernel, optimize=True) + bias


def linear_conv_backward(
    x: np.ndarray, kernel: np.ndarray, grad_output: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of :func:`linear_conv_forward` w.r.t. input, kernel, bias."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 4:
        kernel = kernel[0, 0]
    grad_x = np.einsum("lwf,cf->lwc", grad_output, kernel, optimize=True)
    grad_k = np.einsum("lwc,lwf->cf", x, grad_output, optimize=True)
    grad_b = grad_output.sum(axis=(0, 1))
    return grad_x, grad_k.reshape(1, 1, *grad_k.shape), grad_b
