import random

import pytest

from spikeyolo.energy import (
    PER_SPIKE_ENERGY_J,
    layer_sparsity,
    parse_report_document,
    report_document,
    total_report,
)
from spikeyolo.errors import EmptyLayer
from spikeyolo.layers import LayerStats


def stats(fired, silent, index=1):
    return LayerStats(layer_index=index, fired=fired, silent=silent)


class TestLayerSparsity:
    def test_half(self):
        assert layer_sparsity(stats(5, 5)) == 0.5

    def test_silent_layer(self):
        assert layer_sparsity(stats(0, 10)) == 0.0

    def test_three_quarters(self):
        assert layer_sparsity(stats(3, 1)) == 0.75

    def test_empty_layer(self):
        with pytest.raises(EmptyLayer):
            layer_sparsity(stats(0, 0))


class TestTotalReport:
    def test_paper_scale_energy(self):
        report = total_report([stats(13_000_000, 10_000_000)])
        assert report.per_spike_energy == PER_SPIKE_ENERGY_J == 19e-12
        assert report.energy_joules == 13_000_000 * 19e-12
        assert f"{report.energy_joules * 1e3:.3g}" == "0.247"  # 0.247 mJ

    def test_single_layer_total(self):
        report = total_report([stats(3, 1)])
        assert report.s_total == layer_sparsity(stats(3, 1))

    def test_two_layer_weighted_mean(self):
        report = total_report([stats(1, 1, 1), stats(0, 2, 2)])
        assert report.s_total == pytest.approx(0.25, abs=1e-15)
        weighted = (0.5 * 2 + 0.0 * 2) / 4
        assert report.s_total == pytest.approx(weighted, abs=1e-15)

    def test_weighted_mean_property(self):
        rng = random.Random(0)
        layers = [stats(rng.randrange(1000), rng.randrange(1000) + 1, i) for i in range(9)]
        report = total_report(layers)
        sizes = [s.fired + s.silent for s in layers]
        weighted = sum(le.sparsity * n for le, n in zip(report.layers, sizes)) / sum(sizes)
        assert abs(report.s_total - weighted) <= 1e-12
        for le in report.layers:
            assert 0.0 <= le.sparsity <= 1.0

    def test_merge_order_invariant(self):
        layers = [stats(10, 5, 1), stats(7, 13, 2), stats(0, 9, 3)]
        a = total_report(layers)
        b = total_report(list(reversed(layers)))
        assert a.n_total == b.n_total
        assert a.m_total == b.m_total
        assert a.s_total == b.s_total
        assert a.energy_joules == b.energy_joules

    def test_energy_linear_in_count_and_price(self):
        base = total_report([stats(100, 50)])
        double_n = total_report([stats(200, 50)])
        double_p = total_report([stats(100, 50)], per_spike_energy=2 * PER_SPIKE_ENERGY_J)
        assert double_n.energy_joules == pytest.approx(2 * base.energy_joules, rel=1e-12)
        assert double_p.energy_joules == pytest.approx(2 * base.energy_joules, rel=1e-12)

    def test_all_empty_rejected(self):
        with pytest.raises(EmptyLayer):
            total_report([])
        with pytest.raises(EmptyLayer):
            total_report([stats(0, 0)])


class TestReportDocument:
    def test_round_trip(self):
        report = total_report([stats(10, 5, 1), stats(7, 13, 2)])
        back = parse_report_document(report_document(report))
        assert back.n_total == report.n_total
        assert back.m_total == report.m_total
        assert back.energy_joules == report.energy_joules
        assert len(back.layers) == 2

    def test_field_order(self):
        import json

        report = total_report([stats(10, 5, 1)])
        doc = json.loads(report_document(report))
        assert list(doc.keys()) == [
            "layers", "n_total", "m_total", "s_total", "per_spike_energy_j", "energy_joules",
        ]
        assert list(doc["layers"][0].keys()) == ["layer", "fired", "silent", "sparsity"]
