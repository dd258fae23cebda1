"""Kernel storage, deterministic initialization, and the binary weight file.

Weight file format (little-endian): magic ``SCNW``, ``u32`` version = 1,
``u32`` parameterized-layer count; then per layer: ``u32`` 1-based layer
index, four ``u32`` kernel dims ``(kh, kw, c_in, c_out)``, ``kh*kw*c_in*c_out``
float32 kernel values in row-major order, and — for plain conv layers only —
``c_out`` float32 biases.  Spiking layers are bias-free.

Stored values are float32 (matching the file), so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .config import LayerSpec, NetworkSpec
from .errors import WeightFormatError

_MAGIC = b"SCNW"
_VERSION = 1
_HEAD = struct.Struct("<4sII")
_LAYER_HEAD = struct.Struct("<I4I")


@dataclass
class WeightStore:
    """Per-layer kernels (and biases for plain conv layers), float32."""

    kernels: dict[int, np.ndarray] = field(default_factory=dict)
    biases: dict[int, np.ndarray] = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightStore):
            return NotImplemented
        if set(self.kernels) != set(other.kernels) or set(self.biases) != set(other.biases):
            return False
        return all(
            np.array_equal(self.kernels[i], other.kernels[i]) for i in self.kernels
        ) and all(np.array_equal(self.biases[i], other.biases[i]) for i in self.biases)


def _layer_fan_in(layer: LayerSpec) -> int:
    return layer.kernel * layer.kernel * layer.input_shape[2]


def _draw_layer(layer: LayerSpec, seed: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Float64 parameter draw for one layer, keyed by (seed, layer index).

    Spiking kernels are drawn with mean 4/fan_in so the expected weight sum
    over a receptive field is about 4 — safely above the unit threshold,
    which keeps freshly initialized layers spiking.  The plain conv layer
    gets zero-mean kernels and zero biases.
    """
    rng = np.random.default_rng([seed, layer.index])
    fan_in = _layer_fan_in(layer)
    shape = (layer.kernel, layer.kernel, layer.input_shape[2], layer.filters)
    if layer.kind == "spike_conv":
        kernel = rng.normal(4.0 / fan_in, 1.0 / np.sqrt(fan_in), size=shape)
        return kernel, None
    kernel = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)
    return kernel, np.zeros(layer.filters, dtype=np.float64)


def init_param_arrays(spec: NetworkSpec, seed: int) -> dict[int, tuple[np.ndarray, np.ndarray | None]]:
    """Full-precision parameter draws for every parameterized layer."""
    return {layer.index: _draw_layer(layer, seed) for layer in spec.parameterized_layers}


def init_weights(spec: NetworkSpec, seed: int) -> WeightStore:
    """Deterministic float32 initialization for ``spec``."""
    store = WeightStore()
    for index, (kernel, bias) in init_param_arrays(spec, seed).items():
        store.kernels[index] = kernel.astype(np.float32)
        if bias is not None:
            store.biases[index] = bias.astype(np.float32)
    return store


def store_from_arrays(params: dict[int, tuple[np.ndarray, np.ndarray | None]]) -> WeightStore:
    """Quantize float64 parameter arrays into a file-ready store."""
    store = WeightStore()
    for index, (kernel, bias) in params.items():
        store.kernels[index] = np.asarray(kernel, dtype=np.float32)
        if bias is not None:
            store.biases[index] = np.asarray(bias, dtype=np.float32)
    return store


def save_weights(store: WeightStore) -> bytes:
    """Serialize to the SCNW container, layers in index order."""
    chunks = [_HEAD.pack(_MAGIC, _VERSION, len(store.kernels))]
    for index in sorted(store.kernels):
        kernel = np.ascontiguousarray(store.kernels[index], dtype="<f4")
        if kernel.ndim != 4:
            raise WeightFormatError(f"layer {index}: kernel must be 4-D, got {kernel.shape}")
        chunks.append(_LAYER_HEAD.pack(index, *kernel.shape))
        chunks.append(kernel.tobytes())
        if index in store.biases:
            bias = np.ascontiguousarray(store.biases[index], dtype="<f4")
            if bias.shape != (kernel.shape[3],):
                raise WeightFormatError(
                    f"layer {index}: bias shape {bias.shape} != ({kernel.shape[3]},)"
                )
            chunks.append(bias.tobytes())
    return b"".join(chunks)


def load_weights(blob: bytes, spec: NetworkSpec) -> WeightStore:
    """Parse an SCNW blob and validate it against ``spec``.

    Raises :class:`WeightFormatError` on a bad magic, version, layer index,
    or kernel shape.
    """
    if len(blob) < _HEAD.size:
        raise WeightFormatError(f"blob too short for header ({len(blob)} bytes)")
    magic, version, count = _HEAD.unpack_from(blob)
    if magic != _MAGIC:
        raise WeightFormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise WeightFormatError(f"unsupported version {version}")
    by_index = {layer.index: layer for layer in spec.parameterized_layers}
    expected = sorted(by_index)
    if count != len(expected):
        raise WeightFormatError(
            f"file has {count} parameterized layers, config expects {len(expected)}"
        )

    store = WeightStore()
    offset = _HEAD.size
    for position in range(count):
        if offset + _LAYER_HEAD.size > len(blob):
            raise WeightFormatError(f"truncated layer header at byte {offset}")
        index, kh, kw, c_in, c_out = _LAYER_HEAD.unpack_from(blob, offset)
        offset += _LAYER_HEAD.size
        if index != expected[position]:
            raise WeightFormatError(
                f"layer index {index} at position {position}, expected {expected[position]}"
            )
        layer = by_index[index]
        want = (layer.kernel, layer.kernel, layer.input_shape[2], layer.filters)
        if (kh, kw, c_in, c_out) != want:
            raise WeightFormatError(
                f"layer {index}: kernel dims {(kh, kw, c_in, c_out)} != config {want}"
            )
        n = kh * kw * c_in * c_out
        if offset + 4 * n > len(blob):
            raise WeightFormatError(f"truncated kernel data in layer {index}")
        kernel = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(kh, kw, c_in, c_out)
        offset += 4 * n
        if not np.isfinite(kernel).all():
            raise WeightFormatError(f"layer {index}: non-finite kernel value")
        store.kernels[index] = kernel.copy()
        if layer.kind == "conv":
            if offset + 4 * c_out > len(blob):
                raise WeightFormatError(f"truncated bias data in layer {index}")
            bias = np.frombuffer(blob, dtype="<f4", count=c_out, offset=offset)
            offset += 4 * c_out
            if not np.isfinite(bias).all():
                raise WeightFormatError(f"layer {index}: non-finite bias value")
            store.biases[index] = bias.copy()
    if offset != len(blob):
        raise WeightFormatError(f"{len(blob) - offset} trailing bytes after last layer")
    return store


def save_weights_file(store: WeightStore, path) -> None:
    from pathlib import Path

    Path(path).write_bytes(save_weights(store))


def load_weights_file(path, spec: NetworkSpec) -> WeightStore:
    from pathlib import Path

    return load_weights(Path(path).read_bytes(), spec)
