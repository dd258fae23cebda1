import numpy as np
import pytest

from helpers import random_spike_tensor
from spikeyolo.errors import LayerShapeError
from spikeyolo.network import forward
from spikeyolo.voxelgrid import SpikeTensor
from spikeyolo.weights import WeightStore, init_weights


class TestForwardToy:
    def test_shapes_and_stats(self, toy_spec, toy_scene):
        store = init_weights(toy_spec, seed=7)
        result = forward(toy_spec, store, toy_scene.tensor, threads=2)
        assert result.head.shape == (12, 16, 75)
        assert [s.layer_index for s in result.stats] == [1, 3, 5]
        for stat, layer_index in zip(result.stats, (1, 3, 5)):
            layer = toy_spec.layers[layer_index - 1]
            assert stat.size == int(np.prod(layer.output_shape))
            assert stat.fired + stat.silent == stat.size

    def test_initialized_net_spikes_everywhere(self, toy_spec, toy_scene):
        store = init_weights(toy_spec, seed=7)
        result = forward(toy_spec, store, toy_scene.tensor)
        for stat in result.stats:
            assert stat.fired > 0

    def test_zero_weights_all_silent(self, toy_spec, toy_scene):
        store = init_weights(toy_spec, seed=0)
        zero = WeightStore(
            kernels={i: np.zeros_like(k) for i, k in store.kernels.items()},
            biases={i: np.zeros_like(b) for i, b in store.biases.items()},
        )
        result = forward(toy_spec, zero, toy_scene.tensor)
        for stat in result.stats:
            assert stat.fired == 0
        assert (result.head == 0).all()
        assert result.t_cap == 1.0  # nothing fired, fallback cap

    def test_thread_counts_bit_identical(self, toy_spec, toy_scene):
        store = init_weights(toy_spec, seed=7)
        results = [forward(toy_spec, store, toy_scene.tensor, threads=n) for n in (1, 2, 5)]
        for other in results[1:]:
            assert np.array_equal(results[0].head, other.head)
            assert [(s.fired, s.silent) for s in results[0].stats] == [
                (s.fired, s.silent) for s in other.stats
            ]

    def test_input_shape_mismatch(self, toy_spec):
        store = init_weights(toy_spec, seed=0)
        with pytest.raises(LayerShapeError):
            forward(toy_spec, store, SpikeTensor(np.zeros((8, 8, 21))))

    def test_record_mode_keeps_intermediates(self, toy_spec, toy_scene):
        store = init_weights(toy_spec, seed=7)
        result = forward(toy_spec, store, toy_scene.tensor, record=True)
        assert set(result.activations) == {0, 1, 2, 3, 4, 5, 6}
        assert set(result.pool_argmins) == {2, 4, 6}
        assert set(result.causal_counts) == {1, 3, 5}


class TestForwardMini:
    def test_skip_connection_wiring(self, mini_spec):
        rng = np.random.default_rng(12)
        tensor = random_spike_tensor(rng, (8, 8, 4), silent_frac=0.1, t_max=1.0)
        store = init_weights(mini_spec, seed=2)
        result = forward(mini_spec, store, tensor, record=True)
        assert result.head.shape == (2, 2, 8)
        acts = result.activations
        # route 6 mirrors layer 3; reorg folds it; route 8 concatenates 7 and 5
        assert np.array_equal(acts[6].values, acts[3].values)
        assert acts[7].values.shape == (2, 2, 32)
        assert np.array_equal(acts[8].values[:, :, :32], acts[7].values)
        assert np.array_equal(acts[8].values[:, :, 32:], acts[5].values)

    def test_fixed_cap_passthrough(self, mini_spec):
        rng = np.random.default_rng(13)
        tensor = random_spike_tensor(rng, (8, 8, 4), silent_frac=0.1, t_max=1.0)
        store = init_weights(mini_spec, seed=2)
        result = forward(mini_spec, store, tensor, t_cap=7.5)
        assert result.t_cap == 7.5
