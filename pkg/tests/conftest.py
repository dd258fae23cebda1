import pytest

from spikeyolo.config import builtin_config, parse_config
from spikeyolo.synthetic import SceneGenerator
from spikeyolo.weights import init_param_arrays

# Small graph exercising every layer kind, including the reorg/route skip.
MINI_CFG = """
[net]
input=8x8x4
classes=1
anchors=1.0,1.0

[layer]
kind=spike_conv
filters=4
kernel=3
stride=1
output=8x8x4

[layer]
kind=maxpool
kernel=2
stride=2
output=4x4x4

[layer]
kind=spike_conv
filters=8
kernel=3
stride=1
output=4x4x8

[layer]
kind=maxpool
kernel=2
stride=2
output=2x2x8

[layer]
kind=spike_conv
filters=8
kernel=3
stride=1
output=2x2x8

[layer]
kind=route
route=3

[layer]
kind=reorg
stride=2
output=2x2x32

[layer]
kind=route
route=7,5

[layer]
kind=spike_conv
filters=8
kernel=3
stride=1
input=2x2x40
output=2x2x8

[layer]
kind=conv
filters=8
kernel=1
stride=1
output=2x2x8

[detect]
shape=2x2x1x8
"""


@pytest.fixture(scope="session")
def toy_spec():
    return builtin_config("toy.cfg")


@pytest.fixture(scope="session")
def mini_spec():
    return parse_config(MINI_CFG)


@pytest.fixture(scope="session")
def toy_scene():
    return SceneGenerator(seed=3).sample(0)


@pytest.fixture(scope="session")
def toy_params(toy_spec):
    return init_param_arrays(toy_spec, seed=11)
