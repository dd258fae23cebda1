"""Sparsity and energy accounting over spiking-layer statistics.

Per-layer sparsity is the active fraction S_i = N_i / (N_i + M_i); the
network total weighs layers by neuron count, and total energy is simply the
active-neuron count times the per-spike cost.  The default per-spike cost of
19 pJ comes from a switched-capacitor analog neuron budget; only spiking
layers are counted — the preprocessing stage and the final linear layer use
no spiking neurons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import EmptyLayer
from .layers import LayerStats

#: Default energy drawn per emitted spike, joules.
PER_SPIKE_ENERGY_J = 19e-12


@dataclass(frozen=True)
class LayerEnergy:
    layer_index: int
    fired: int
    silent: int
    sparsity: float


@dataclass(frozen=True)
class EnergyReport:
    layers: tuple[LayerEnergy, ...]
    n_total: int
    m_total: int
    s_total: float
    per_spike_energy: float
    energy_joules: float


def layer_sparsity(stats: LayerStats) -> float:
    """Active fraction of one layer; raises :class:`EmptyLayer` for size 0."""
    if stats.size == 0:
        raise EmptyLayer(f"layer {stats.layer_index} has no neurons")
    return stats.fired / stats.size


def total_report(
    stats: Sequence[LayerStats], per_spike_energy: float = PER_SPIKE_ENERGY_J
) -> EnergyReport:
    """Aggregate per-layer stats into sparsities and total energy.

    Every sparsity is checked into [0, 1] and the total is verified to equal
    the neuron-count-weighted mean of the per-layer values to 1e-12.
    """
    if not stats or all(s.size == 0 for s in stats):
        raise EmptyLayer("no non-empty layers to report")
    layers = []
    for s in stats:
        sp = layer_sparsity(s)
        if not (0.0 <= sp <= 1.0):
            raise AssertionError(f"sparsity {sp} outside [0, 1] for layer {s.layer_index}")
        layers.append(LayerEnergy(s.layer_index, s.fired, s.silent, sp))
    n_total = sum(s.fired for s in stats)
    m_total = sum(s.silent for s in stats)
    s_total = n_total / (n_total + m_total)
    weighted = sum(le.sparsity * (le.fired + le.silent) for le in layers) / (n_total + m_total)
    if abs(s_total - weighted) > 1e-12:
        raise AssertionError(
            f"total sparsity {s_total} inconsistent with weighted mean {weighted}"
        )
    return EnergyReport(
        layers=tuple(layers),
        n_total=n_total,
        m_total=m_total,
        s_total=s_total,
        per_spike_energy=per_spike_energy,
        energy_joules=n_total * per_spike_energy,
    )


def report_document(report: EnergyReport) -> str:
    """Serialize a report with a fixed field order."""
    doc = {
        "layers": [
            {
                "layer": le.layer_index,
                "fired": le.fired,
                "silent": le.silent,
                "sparsity": round(le.sparsity, 9),
            }
            for le in report.layers
        ],
        "n_total": report.n_total,
        "m_total": report.m_total,
        "s_total": round(report.s_total, 9),
        "per_spike_energy_j": report.per_spike_energy,
        "energy_joules": report.energy_joules,
    }
    return json.dumps(doc, indent=2) + "\n"


def parse_report_document(text: str) -> EnergyReport:
    doc = json.loads(text)
    layers = tuple(
        LayerEnergy(int(e["layer"]), int(e["fired"]), int(e["silent"]), float(e["sparsity"]))
        for e in doc["layers"]
    )
    return EnergyReport(
        layers=layers,
        n_total=int(doc["n_total"]),
        m_total=int(doc["m_total"]),
        s_total=float(doc["s_total"]),
        per_spike_energy=float(doc["per_spike_energy_j"]),
        energy_joules=float(doc["energy_joules"]),
    )


def write_report(report: EnergyReport, path: str | Path) -> None:
    Path(path).write_text(report_document(report))
