import numpy as np
import pytest

from spikeyolo.errors import WeightFormatError
from spikeyolo.weights import (
    init_param_arrays,
    init_weights,
    load_weights,
    save_weights,
    store_from_arrays,
)


class TestInit:
    def test_same_seed_identical(self, toy_spec):
        assert init_weights(toy_spec, 7) == init_weights(toy_spec, 7)

    def test_different_seed_differs(self, toy_spec):
        assert not (init_weights(toy_spec, 7) == init_weights(toy_spec, 8))

    def test_spiking_receptive_field_sum_near_four(self, toy_spec):
        store = init_weights(toy_spec, 3)
        for layer in toy_spec.parameterized_layers:
            if layer.kind != "spike_conv":
                continue
            kernel = store.kernels[layer.index]
            sums = kernel.reshape(-1, kernel.shape[3]).sum(axis=0)
            assert abs(sums.mean() - 4.0) < 1.5

    def test_conv_bias_zero(self, toy_spec):
        store = init_weights(toy_spec, 3)
        final = toy_spec.layers[-1]
        assert (store.biases[final.index] == 0).all()

    def test_float64_draw_quantizes_to_store(self, toy_spec):
        params = init_param_arrays(toy_spec, 5)
        assert store_from_arrays(params) == init_weights(toy_spec, 5)


class TestFileFormat:
    def test_round_trip(self, toy_spec):
        store = init_weights(toy_spec, 1)
        blob = save_weights(store)
        assert blob[:4] == b"SCNW"
        back = load_weights(blob, toy_spec)
        assert back == store
        assert save_weights(back) == blob

    def test_bad_magic(self, toy_spec):
        blob = bytearray(save_weights(init_weights(toy_spec, 1)))
        blob[:4] = b"WXYZ"
        with pytest.raises(WeightFormatError, match="magic"):
            load_weights(bytes(blob), toy_spec)

    def test_bad_version(self, toy_spec):
        blob = bytearray(save_weights(init_weights(toy_spec, 1)))
        blob[4] = 2
        with pytest.raises(WeightFormatError, match="version"):
            load_weights(bytes(blob), toy_spec)

    def test_truncated(self, toy_spec):
        blob = save_weights(init_weights(toy_spec, 1))
        with pytest.raises(WeightFormatError):
            load_weights(blob[:-8], toy_spec)

    def test_trailing_bytes(self, toy_spec):
        blob = save_weights(init_weights(toy_spec, 1))
        with pytest.raises(WeightFormatError, match="trailing"):
            load_weights(blob + b"\x00\x00", toy_spec)

    def test_wrong_config_shape(self, toy_spec, mini_spec):
        blob = save_weights(init_weights(toy_spec, 1))
        with pytest.raises(WeightFormatError):
            load_weights(blob, mini_spec)

    def test_non_finite_rejected(self, toy_spec):
        store = init_weights(toy_spec, 1)
        first = toy_spec.parameterized_layers[0].index
        store.kernels[first] = store.kernels[first].copy()
        store.kernels[first][0, 0, 0, 0] = np.float32("inf")
        blob = save_weights(store)
        with pytest.raises(WeightFormatError, match="non-finite"):
            load_weights(blob, toy_spec)
