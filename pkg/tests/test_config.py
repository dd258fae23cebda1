import pytest

from spikeyolo.config import DEFAULT_ANCHORS, builtin_config, builtin_config_text, parse_config
from spikeyolo.errors import ConfigError, ConfigShapeError

# (kind, filters, input, output) for every row of the full-size architecture.
TABLE1_ROWS = [
    ("spike_conv", 32, (768, 1024, 21), (768, 1024, 32)),
    ("maxpool", 0, (768, 1024, 32), (384, 512, 32)),
    ("spike_conv", 48, (384, 512, 32), (384, 512, 48)),
    ("maxpool", 0, (384, 512, 48), (192, 256, 48)),
    ("spike_conv", 64, (192, 256, 48), (192, 256, 64)),
    ("maxpool", 0, (192, 256, 64), (96, 128, 64)),
    ("spike_conv", 128, (96, 128, 64), (96, 128, 128)),
    ("maxpool", 0, (96, 128, 128), (48, 64, 128)),
    ("spike_conv", 256, (48, 64, 128), (48, 64, 256)),
    ("spike_conv", 1024, (48, 64, 256), (48, 64, 1024)),
    ("spike_conv", 512, (48, 64, 1024), (48, 64, 512)),
    ("maxpool", 0, (48, 64, 512), (24, 32, 512)),
    ("spike_conv", 1024, (24, 32, 512), (24, 32, 1024)),
    ("route", 0, (48, 64, 256), (48, 64, 256)),
    ("reorg", 0, (48, 64, 256), (24, 32, 1024)),
    ("route", 0, (24, 32, 1024), (24, 32, 2048)),
    ("spike_conv", 1024, (24, 32, 2048), (24, 32, 1024)),
    ("conv", 75, (24, 32, 1024), (24, 32, 75)),
]


class TestTable1:
    def test_every_row(self):
        spec = builtin_config("table1.cfg")
        assert len(spec.layers) == len(TABLE1_ROWS) == 18
        for layer, (kind, filters, inp, out) in zip(spec.layers, TABLE1_ROWS):
            assert layer.kind == kind
            assert layer.filters == filters
            assert layer.input_shape == inp
            assert layer.output_shape == out

    def test_head_geometry(self):
        spec = builtin_config("table1.cfg")
        assert spec.output_shape == (24, 32, 75)
        assert spec.head_shape == (24, 32, 5, 15)
        assert spec.n_anchors == 5
        assert spec.values_per_anchor == 15
        assert spec.n_classes == 8
        assert spec.skip_connections

    def test_route_references(self):
        spec = builtin_config("table1.cfg")
        assert spec.layers[13].route_sources == (9,)
        assert spec.layers[15].route_sources == (15, 13)

    def test_spike_layers(self):
        spec = builtin_config("table1.cfg")
        assert spec.spike_layer_indices == (1, 3, 5, 7, 9, 10, 11, 13, 17)


class TestNoScVariant:
    def test_chains_validly(self):
        spec = builtin_config("table1-nosc.cfg")
        assert not spec.skip_connections
        assert spec.output_shape == (24, 32, 75)
        # the last spiking layer reads the deep branch directly
        final_spike = spec.layers[-2]
        assert final_spike.kind == "spike_conv"
        assert final_spike.input_shape == (24, 32, 1024)

    def test_shares_backbone_with_table1(self):
        sc = builtin_config("table1.cfg")
        nosc = builtin_config("table1-nosc.cfg")
        for a, b in zip(sc.layers[:13], nosc.layers[:13]):
            assert (a.kind, a.filters, a.output_shape) == (b.kind, b.filters, b.output_shape)


class TestParseErrors:
    def test_declared_shape_contradiction(self):
        text = builtin_config_text("table1.cfg").replace(
            "input=768x1024x21\noutput=768x1024x32",
            "input=768x1024x22\noutput=768x1024x32",
        )
        with pytest.raises(ConfigShapeError, match="layer 1"):
            parse_config(text)

    def test_unknown_kind(self):
        text = "[net]\ninput=8x8x2\n[layer]\nkind=warp\nfilters=3\n"
        with pytest.raises(ConfigError, match="unknown kind"):
            parse_config(text)

    def test_pool_indivisible(self):
        text = "[net]\ninput=7x8x2\n[layer]\nkind=maxpool\nkernel=2\nstride=2\n"
        with pytest.raises(ConfigShapeError):
            parse_config(text)

    def test_conv_must_be_final(self):
        text = (
            "[net]\ninput=8x8x2\n"
            "[layer]\nkind=conv\nfilters=3\nkernel=1\n"
            "[layer]\nkind=maxpool\nkernel=2\nstride=2\n"
        )
        with pytest.raises(ConfigError, match="final"):
            parse_config(text)

    def test_route_forward_reference(self):
        text = "[net]\ninput=8x8x2\n[layer]\nkind=route\nroute=2\n"
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_even_spike_kernel(self):
        text = "[net]\ninput=8x8x2\n[layer]\nkind=spike_conv\nfilters=3\nkernel=2\n"
        with pytest.raises(ConfigError, match="odd"):
            parse_config(text)

    def test_detect_mismatch(self):
        text = (
            "[net]\ninput=8x8x2\nclasses=1\nanchors=1.0,1.0\n"
            "[layer]\nkind=conv\nfilters=8\nkernel=1\n"
            "[detect]\nshape=8x8x2x4\n"
        )
        with pytest.raises(ConfigShapeError):
            parse_config(text)

    def test_missing_net(self):
        with pytest.raises(ConfigError, match="net"):
            parse_config("[layer]\nkind=reorg\n")

    def test_unknown_builtin(self):
        with pytest.raises(ConfigError):
            builtin_config("nope.cfg")


class TestRouteResolution:
    def test_negative_references(self):
        text = (
            "[net]\ninput=8x8x2\nclasses=1\nanchors=1.0,1.0\n"
            "[layer]\nkind=spike_conv\nfilters=4\nkernel=3\n"
            "[layer]\nkind=spike_conv\nfilters=6\nkernel=3\n"
            "[layer]\nkind=route\nroute=-1,-2\n"
            "[layer]\nkind=conv\nfilters=8\nkernel=1\n"
        )
        spec = parse_config(text)
        assert spec.layers[2].route_sources == (2, 1)
        assert spec.layers[2].output_shape == (8, 8, 10)

    def test_default_anchors(self):
        text = "[net]\ninput=8x8x2\n[layer]\nkind=spike_conv\nfilters=4\nkernel=3\n"
        spec = parse_config(text)
        assert spec.anchors == DEFAULT_ANCHORS
