"""Temporal-coding spiking convolutional networks over LiDAR point clouds.

The pipeline turns a raw velodyne scan into a dense spike-time tensor, runs
a YOLOv2-shaped stack of closed-form integrate-and-fire convolutions over
it, decodes oriented birds-eye-view boxes from the linear head, and accounts
for how many neurons actually spiked — and therefore how much energy the
network would draw on per-spike hardware.
"""

from .errors import (
    ConfigError,
    ConfigShapeError,
    DecodeError,
    EmptyLayer,
    LayerShapeError,
    MalformedCloud,
    NonDifferentiable,
    OutOfRoi,
    SpikeYoloError,
    TrainingDiverged,
    WeightFormatError,
)
from .pointcloud import (
    DEFAULT_ROI,
    Point,
    PointCloud,
    Roi,
    SPEED_OF_LIGHT,
    distance,
    filter_roi,
    parse_cloud,
    round_trip_time,
    serialize_cloud,
)
from .voxelgrid import (
    DEFAULT_GRID,
    GridSpec,
    NO_SPIKE,
    SpikeTensor,
    load_tensor,
    save_tensor,
    voxel_index,
    voxelize,
)
from .neuron import (
    NeuronConfig,
    SpikeResult,
    SynapticInput,
    membrane_potential,
    simulate_spike_time,
    solve_spike_time,
    spike_gradients,
)
from .config import NetworkSpec, builtin_config, load_config, parse_config
from .weights import WeightStore, init_weights, load_weights, save_weights
from .network import ForwardResult, forward
from .layers import LayerStats
from .detection import DEFAULT_CLASS_NAMES, Detection, GroundTruthBox, decode, nms
from .energy import EnergyReport, PER_SPIKE_ENERGY_J, layer_sparsity, total_report
from .evalkit import EvalConfig, OrientedBox, average_precision, render_bev, rotated_iou

__version__ = "0.1.0"
