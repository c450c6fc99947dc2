import numpy as np
import pytest

from app.core.layers import LayerSpec
from app.core.model import InstanceClassifierConfig, ModelParams
from app.core.rng import Rng
from app.data.bags import Bag, Patch
from app.data.synth import SynthConfig, write_synthetic_dataset


@pytest.fixture
def generator():
    return np.random.default_rng(42)


@pytest.fixture
def small_model():
    """
    conv -> relu -> maxpool -> affine -> relu -> dropout -> affine -> sigmoid on 3 x 8 x 8 patches.
    """
    return InstanceClassifierConfig.default((3, 8, 8), conv_channels=(2,), conv_kernels=(3,), hidden_units=4, dropout=0.5)


@pytest.fixture
def small_params(small_model):
    return ModelParams.initialize(small_model, Rng(7).derive("init"))


@pytest.fixture
def make_bag(generator):
    def factory(k=3, size=8, label=1, bag_id="bag"):
        patches = tuple(
            Patch(generator.integers(0, 256, size=(size, size, 3), dtype=np.uint8), row=i // 8, col=i % 8)
            for i in range(k)
        )
        return Bag(bag_id, label, patches)

    return factory


@pytest.fixture
def bag(make_bag):
    return make_bag()


@pytest.fixture
def synthetic_manifest(tmp_path):
    """
    A 16-bag synthetic dataset with 16 px patches.
    """
    config = SynthConfig(num_bags=16, k_min=2, k_max=4, patch_size=16, seed=3)
    return write_synthetic_dataset(tmp_path / "ds", config)


@pytest.fixture
def tiny_settings_file(tmp_path):
    """
    Settings sized for 16 px patches and a couple of quick epochs.
    """
    path = tmp_path / "settings.yaml"
    path.write_text(
        "model:\n"
        "  conv_channels: [2]\n"
        "  conv_kernels: [3]\n"
        "  hidden_units: 4\n"
        "augment:\n"
        "  blur: false\n"
        "train:\n"
        "  max_epochs: 2\n"
        "  patience: 2\n"
        "  learning_rate: 0.001\n"
    )
    return path
