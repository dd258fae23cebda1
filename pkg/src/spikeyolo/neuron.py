"""Non-leaky integrate-and-fire neuron with exponentially decaying synapses.

Each input spike at time ``t_i`` with weight ``w_i`` injects the current
``w_i * exp(-(t - t_i) / tau_syn)`` for ``t >= t_i``; the membrane integrates
it without leak and fires once when the potential reaches the threshold.
The crossing time has a closed form in the z = exp(t / tau) domain:

    z_out = sum_C(w_i * z_i) / (sum_C(w_i) - threshold)

where C is the causal set of inputs arriving strictly before the output
spike.  ``solve_spike_time`` evaluates this by scanning sorted prefixes;
``simulate_spike_time`` integrates the membrane equation step by step and
serves as the independent reference for it.  A neuron that never reaches
threshold yields the ``NO_SPIKE`` sentinel (+inf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from ._parallel import run_blocks
from .errors import NonDifferentiable


class SynapticInput(NamedTuple):
    """One incoming spike: arrival time (or ``NO_SPIKE``) and synaptic weight."""

    time: float
    weight: float


@dataclass(frozen=True)
class NeuronConfig:
    """Threshold and synaptic time constant; both 1 in the reference setup."""

    threshold: float = 1.0
    tau_syn: float = 1.0

    def __post_init__(self) -> None:
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise ValueError(f"threshold must be finite positive, got {self.threshold}")
        if not (self.tau_syn > 0 and math.isfinite(self.tau_syn)):
            raise ValueError(f"tau_syn must be finite positive, got {self.tau_syn}")


DEFAULT_CONFIG = NeuronConfig()


@dataclass(frozen=True)
class SpikeResult:
    """Output spike time (``NO_SPIKE`` if silent) and causal input count."""

    time: float
    causal_count: int

    @property
    def fired(self) -> bool:
        return math.isfinite(self.time)


@dataclass(frozen=True)
class SpikeGradients:
    """Sensitivities of one spike time to its causal inputs.

    Arrays are aligned with the original input sequence and zero outside the
    causal set.  ``dz_*`` are the exponential-domain sensitivities; ``dt_*``
    chain them through t = tau * ln(z).
    """

    causal: np.ndarray
    dt_dw: np.ndarray
    dt_dt: np.ndarray
    dz_dw: np.ndarray
    dz_dz: np.ndarray


def _as_arrays(inputs: Sequence) -> tuple[np.ndarray, np.ndarray]:
    n = len(inputs)
    ts = np.empty(n, dtype=np.float64)
    ws = np.empty(n, dtype=np.float64)
    for i, item in enumerate(inputs):
        ts[i] = item[0]
        ws[i] = item[1]
    if np.isnan(ts).any():
        raise ValueError("input spike times must not be NaN")
    if not np.isfinite(ws).all():
        raise ValueError("synaptic weights must be finite")
    return ts, ws


def membrane_potential(inputs: Sequence, t: float, cfg: NeuronConfig = DEFAULT_CONFIG) -> float:
    """Membrane potential at time ``t``: the integrated synaptic current.

    Direct evaluation of ``sum_i theta(t - t_i) w_i (1 - exp(-(t - t_i)/tau))``.
    """
    if not math.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    ts, ws = _as_arrays(inputs)
    active = ts <= t
    if not active.any():
        return 0.0
    dt = t - ts[active]
    return float(np.sum(ws[active] * (1.0 - np.exp(-dt / cfg.tau_syn))))


def solve_spike_time(inputs: Sequence, cfg: NeuronConfig = DEFAULT_CONFIG) -> SpikeResult:
    """Closed-form first threshold crossing; ``NO_SPIKE`` inputs are ignored."""
    ts, ws = _as_arrays(inputs)
    t_out, cc = _kernels.solve_single(ts, ws.reshape(-1, 1), cfg.threshold, cfg.tau_syn)
    return SpikeResult(float(t_out), int(cc))


def simulate_spike_time(
    inputs: Sequence, cfg: NeuronConfig = DEFAULT_CONFIG, dt: float = 1e-4
) -> SpikeResult:
    """Brute-force forward-Euler integration of the membrane equation.

    Steps from t = 0 to 20 tau past the last finite arrival and reports the
    first crossing, linearly interpolated inside the step.  Independent of
    the closed form; used to cross-check it.
    """
    if not (dt > 0):
        raise ValueError(f"dt must be positive, got {dt}")
    ts, ws = _as_arrays(inputs)
    t_out, cc = _kernels.euler_single(ts, ws, cfg.threshold, cfg.tau_syn, dt)
    # Causal count is defined against inputs strictly before the spike.
    return SpikeResult(float(t_out), int(cc))


def solve_spike_times(
    times: np.ndarray,
    weights: np.ndarray,
    counts: np.ndarray,
    cfg: NeuronConfig = DEFAULT_CONFIG,
    threads: int | None = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Batch closed-form solve over row-padded ``(n_cases, max_inputs)`` arrays."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    n = times.shape[0]
    out_t = np.empty(n, dtype=np.float64)
    out_cc = np.empty(n, dtype=np.int64)
    run_blocks(
        lambda a, b: _kernels.solve_batch(
            times, weights, counts, cfg.threshold, cfg.tau_syn, out_t, out_cc, a, b
        ),
        n,
        threads,
    )
    return out_t, out_cc


def simulate_spike_times(
    times: np.ndarray,
    weights: np.ndarray,
    counts: np.ndarray,
    cfg: NeuronConfig = DEFAULT_CONFIG,
    dt: float = 1e-4,
    threads: int | None = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Batch forward-Euler integration; same layout as :func:`solve_spike_times`."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    n = times.shape[0]
    out_t = np.empty(n, dtype=np.float64)
    out_cc = np.empty(n, dtype=np.int64)
    run_blocks(
        lambda a, b: _kernels.euler_batch(
            times, weights, counts, cfg.threshold, cfg.tau_syn, dt, out_t, out_cc, a, b
        ),
        n,
        threads,
    )
    return out_t, out_cc


#: Interior-case tolerance for gradient evaluation: the output spike must sit
#: at least this far from every input time, and the causal weight sum at
#: least this far above threshold.
INTERIOR_EPS = 1e-9


def spike_gradients(
    inputs: Sequence, result: SpikeResult, cfg: NeuronConfig = DEFAULT_CONFIG
) -> SpikeGradients:
    """Analytic sensitivities of ``result.time`` to causal weights and times.

    With W and Z the causal sums and z_out = Z / (W - threshold):

        dz_out/dw_i = (z_i - z_out) / (W - threshold)
        dz_out/dz_i = w_i / (W - threshold)

    and the time-domain values follow from t = tau ln(z).  Raises
    :class:`NonDifferentiable` for silent neurons and for boundary cases
    where an infinitesimal perturbation could change the causal set.
    """
    ts, ws = _as_arrays(inputs)
    if not result.fired:
        raise NonDifferentiable("neuron did not fire")
    t_out = result.time
    finite = np.isfinite(ts)
    if finite.any() and np.min(np.abs(ts[finite] - t_out)) <= INTERIOR_EPS:
        raise NonDifferentiable("output spike coincides with an input time")
    causal = finite & (ts < t_out)
    if int(causal.sum()) != result.causal_count:
        raise NonDifferentiable("causal set is ambiguous at this point")
    tau = cfg.tau_syn
    z_in = np.exp(ts[causal] / tau)
    w_c = ws[causal]
    w_sum = float(w_c.sum())
    z_sum = float((w_c * z_in).sum())
    denom = w_sum - cfg.threshold
    if denom <= INTERIOR_EPS:
        raise NonDifferentiable(f"causal weight sum {w_sum} too close to threshold")
    z_out = z_sum / denom

    dz_dw = np.zeros_like(ws)
    dz_dz = np.zeros_like(ws)
    dt_dw = np.zeros_like(ws)
    dt_dt = np.zeros_like(ws)
    dz_dw[causal] = (z_in - z_out) / denom
    dz_dz[causal] = w_c / denom
    dt_dw[causal] = tau * (z_in - z_out) / z_sum
    dt_dt[causal] = w_c * z_in / z_sum
    return SpikeGradients(causal=causal, dt_dw=dt_dw, dt_dt=dt_dt, dz_dw=dz_dw, dz_dz=dz_dz)
