"""Line-oriented network config parsing and shape-chain validation.

A config is a sequence of sections.  ``[net]`` declares the input tensor,
class count, and anchor priors; each ``[layer]`` block describes one layer
with keys ``kind`` / ``filters`` / ``kernel`` / ``stride`` / ``route`` and
optional declared ``input`` / ``output`` shapes (``LxWxC``); a final
``[detect]`` section declares the head layout ``LxWxAxV``.  The parser
chains shapes layer by layer and cross-checks every declaration, so a config
that transcribes an architecture table is verified row by row.

Route sources are 1-based layer numbers; negative values count back from the
layer being defined (-1 is the previous layer).

Shipped configs (``spikeyolo/configs/``):

* ``table1.cfg``   — full-size detector with the reorg/route skip connection;
* ``table1-nosc.cfg`` — same backbone without the skip connection;
* ``toy.cfg``      — reduced three-stage variant for desk-scale training.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError, ConfigShapeError

LAYER_KINDS = ("spike_conv", "maxpool", "reorg", "route", "conv")

#: Anchor priors (width, length) in head-cell units; plumbing defaults,
#: overridable from the [net] section.
DEFAULT_ANCHORS = ((0.6, 1.3), (0.8, 2.0), (1.0, 3.0), (0.5, 0.5), (1.5, 4.5))

#: Regression (6) plus objectness (1) channels per anchor, before classes.
BOX_CHANNELS = 7


@dataclass(frozen=True)
class LayerSpec:
    """One resolved layer: kind, geometry, and its inferred shapes."""

    index: int  # 1-based position in the config
    kind: str
    filters: int = 0
    kernel: int = 0
    stride: int = 1
    route_sources: tuple[int, ...] = ()
    input_shape: tuple[int, int, int] = (0, 0, 0)
    output_shape: tuple[int, int, int] = (0, 0, 0)


@dataclass(frozen=True)
class NetworkSpec:
    """Validated layer graph plus detection-head geometry."""

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS
    n_classes: int = 8
    head_shape: tuple[int, int, int, int] | None = None

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    @property
    def values_per_anchor(self) -> int:
        return BOX_CHANNELS + self.n_classes

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return self.layers[-1].output_shape

    @property
    def skip_connections(self) -> bool:
        return any(layer.kind == "route" for layer in self.layers)

    @property
    def spike_layer_indices(self) -> tuple[int, ...]:
        return tuple(l.index for l in self.layers if l.kind == "spike_conv")

    @property
    def parameterized_layers(self) -> tuple[LayerSpec, ...]:
        return tuple(l for l in self.layers if l.kind in ("spike_conv", "conv"))


def _parse_shape(text: str, where: str) -> tuple[int, ...]:
    try:
        parts = tuple(int(p) for p in text.lower().replace("x", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: bad shape {text!r}") from None
    if len(parts) < 2 or any(p <= 0 for p in parts):
        raise ConfigError(f"{where}: bad shape {text!r}")
    return parts


def _sections(text: str):
    current: tuple[str, dict] | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            if current is not None:
                yield current
            current = (line[1:-1].strip().lower(), {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, value = (part.strip() for part in line.split("=", 1))
        current[1][key.lower()] = value
    if current is not None:
        yield current


def parse_config(text: str) -> NetworkSpec:
    """Parse config text into a :class:`NetworkSpec`, validating all shapes."""
    net: dict | None = None
    layer_sections: list[dict] = []
    detect: dict | None = None
    for name, keys in _sections(text):
        if name == "net":
            if net is not None:
                raise ConfigError("duplicate [net] section")
            net = keys
        elif name == "layer":
            if detect is not None:
                raise ConfigError("[layer] after [detect]")
            layer_sections.append(keys)
        elif name == "detect":
            if detect is not None:
                raise ConfigError("duplicate [detect] section")
            detect = keys
        else:
            raise ConfigError(f"unknown section [{name}]")
    if net is None:
        raise ConfigError("missing [net] section")
    if not layer_sections:
        raise ConfigError("config defines no layers")

    input_shape = _parse_shape(net.get("input", ""), "[net] input")
    if len(input_shape) != 3:
        raise ConfigError(f"[net] input must be LxWxC, got {net.get('input')!r}")
    n_classes = int(net.get("classes", 8))
    if n_classes < 1:
        raise ConfigError(f"[net] classes must be >= 1, got {n_classes}")
    anchors = DEFAULT_ANCHORS
    if "anchors" in net:
        flat = [float(v) for v in net["anchors"].replace(",", " ").split()]
        if len(flat) < 2 or len(flat) % 2:
            raise ConfigError("[net] anchors must be (width, length) pairs")
        anchors = tuple((flat[i], flat[i + 1]) for i in range(0, len(flat), 2))
        if any(w <= 0 or l <= 0 for w, l in anchors):
            raise ConfigError("[net] anchors must be positive")

    layers: list[LayerSpec] = []
    shapes: dict[int, tuple[int, int, int]] = {0: input_shape}  # 0 = network input
    for pos, keys in enumerate(layer_sections, 1):
        where = f"layer {pos}"
        kind = keys.get("kind", "")
        if kind not in LAYER_KINDS:
            raise ConfigError(f"{where}: unknown kind {kind!r}")
        prev_shape = shapes[pos - 1]

        route_sources: tuple[int, ...] = ()
        if kind == "route":
            if "route" not in keys:
                raise ConfigError(f"{where}: route layer needs route= sources")
            sources = []
            for tok in keys["route"].replace(",", " ").split():
                ref = int(tok)
                if ref < 0:
                    ref = pos + ref
                if not (1 <= ref < pos):
                    raise ConfigError(f"{where}: route source {tok} out of range")
                sources.append(ref)
            route_sources = tuple(sources)
            spatial = shapes[route_sources[0]][:2]
            for ref in route_sources[1:]:
                if shapes[ref][:2] != spatial:
                    raise ConfigShapeError(
                        f"{where}: route sources have mismatched spatial dims "
                        f"{[shapes[r] for r in route_sources]}"
                    )
            out_shape = (*spatial, sum(shapes[r][2] for r in route_sources))
            in_shape = shapes[route_sources[0]]
            filters = kernel = 0
            stride = 1
        elif kind == "reorg":
            stride = int(keys.get("stride", 2))
            if stride < 2:
                raise ConfigError(f"{where}: reorg stride must be >= 2")
            if prev_shape[0] % stride or prev_shape[1] % stride:
                raise ConfigShapeError(
                    f"{where}: reorg input {prev_shape} not divisible by stride {stride}"
                )
            in_shape = prev_shape
            out_shape = (
                prev_shape[0] // stride,
                prev_shape[1] // stride,
                prev_shape[2] * stride * stride,
            )
            filters = kernel = 0
        elif kind == "maxpool":
            kernel = int(keys.get("kernel", 2))
            stride = int(keys.get("stride", kernel))
            if kernel != stride:
                raise ConfigError(f"{where}: maxpool supports kernel == stride only")
            if prev_shape[0] % stride or prev_shape[1] % stride:
                raise ConfigShapeError(
                    f"{where}: pool input {prev_shape} not divisible by stride {stride}"
                )
            in_shape = prev_shape
            out_shape = (prev_shape[0] // stride, prev_shape[1] // stride, prev_shape[2])
            filters = 0
        elif kind == "spike_conv":
            filters = int(keys.get("filters", 0))
            kernel = int(keys.get("kernel", 3))
            stride = int(keys.get("stride", 1))
            if filters < 1:
                raise ConfigError(f"{where}: spike_conv needs filters >= 1")
            if stride != 1:
                raise ConfigError(f"{where}: spike_conv supports stride 1 only")
            if kernel % 2 == 0:
                raise ConfigError(f"{where}: spike_conv kernel must be odd for same padding")
            in_shape = prev_shape
            out_shape = (prev_shape[0], prev_shape[1], filters)
        else:  # conv
            filters = int(keys.get("filters", 0))
            kernel = int(keys.get("kernel", 1))
            stride = int(keys.get("stride", 1))
            if filters < 1:
                raise ConfigError(f"{where}: conv needs filters >= 1")
            if kernel != 1 or stride != 1:
                raise ConfigError(f"{where}: conv supports 1x1 stride-1 kernels only")
            if pos != len(layer_sections):
                raise ConfigError(f"{where}: conv emits real values and must be the final layer")
            in_shape = prev_shape
            out_shape = (prev_shape[0], prev_shape[1], filters)

        for key, inferred in (("input", in_shape), ("output", out_shape)):
            if key in keys:
                declared = _parse_shape(keys[key], f"{where} {key}")
                if declared != inferred:
                    raise ConfigShapeError(
                        f"{where} ({kind}): declared {key} "
                        f"{'x'.join(map(str, declared))} != inferred "
                        f"{'x'.join(map(str, inferred))}"
                    )
        shapes[pos] = out_shape
        layers.append(
            LayerSpec(
                index=pos,
                kind=kind,
                filters=filters,
                kernel=kernel,
                stride=stride,
                route_sources=route_sources,
                input_shape=in_shape,
                output_shape=out_shape,
            )
        )

    head_shape = None
    if detect is not None:
        shape = _parse_shape(detect.get("shape", ""), "[detect] shape")
        if len(shape) != 4:
            raise ConfigError("[detect] shape must be LxWxAxV")
        head_shape = shape
        final = layers[-1].output_shape
        expected = (shape[0], shape[1], shape[2] * shape[3])
        if final != expected:
            raise ConfigShapeError(
                f"[detect] shape {shape} implies head {expected}, final layer gives {final}"
            )
        if shape[2] != len(anchors):
            raise ConfigShapeError(
                f"[detect] declares {shape[2]} anchors, [net] provides {len(anchors)}"
            )
        if shape[3] != BOX_CHANNELS + n_classes:
            raise ConfigShapeError(
                f"[detect] declares {shape[3]} values per anchor, expected "
                f"{BOX_CHANNELS} + {n_classes} classes"
            )

    return NetworkSpec(
        layers=tuple(layers),
        input_shape=input_shape,
        anchors=anchors,
        n_classes=n_classes,
        head_shape=head_shape,
    )


def load_config(path: str | Path) -> NetworkSpec:
    return parse_config(Path(path).read_text())


def builtin_config_text(name: str) -> str:
    """Text of a shipped config (``table1.cfg``, ``table1-nosc.cfg``, ``toy.cfg``)."""
    ref = resources.files("spikeyolo") / "configs" / name
    if not ref.is_file():
        raise ConfigError(f"no builtin config named {name!r}")
    return ref.read_text()


def builtin_config(name: str) -> NetworkSpec:
    return parse_config(builtin_config_text(name))
