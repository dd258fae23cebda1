"""Exception types shared across the package."""


class SpikeYoloError(Exception):
    """Base class for all errors raised by this package."""


class MalformedCloud(SpikeYoloError):
    """Point-cloud blob violates the 16-byte-record wire format."""


class OutOfRoi(SpikeYoloError):
    """Point lies outside the region of interest."""


class ConfigError(SpikeYoloError):
    """Network config text is malformed or names an unknown layer kind."""


class ConfigShapeError(ConfigError):
    """Declared layer shapes contradict the inferred shape chain."""


class LayerShapeError(SpikeYoloError):
    """Tensor shape incompatible with the layer being executed."""


class WeightFormatError(SpikeYoloError):
    """Weight blob has a bad magic, version, or shape."""


class DecodeError(SpikeYoloError):
    """Detection head tensor does not match the anchor layout."""


class NonDifferentiable(SpikeYoloError):
    """Spike-time gradient requested at a non-interior point."""


class TrainingDiverged(SpikeYoloError):
    """Loss became non-finite during training."""


class EmptyLayer(SpikeYoloError):
    """Sparsity requested for a layer with zero neurons."""
