import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from platesr import DenoiserConfig, ImageTensor, init_denoiser, make_desk_schedule


@pytest.fixture(scope="session")
def desk_schedule():
    return make_desk_schedule()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h=16, w=16, c=3, tag="unit"):
    v = rng.uniform(0.0, 1.0, size=(h, w, c))
    if tag == "symmetric":
        return ImageTensor(v * 2 - 1, "symmetric")
    if tag == "byte":
        return ImageTensor(v * 255, "byte")
    if tag is None:
        return ImageTensor(v)
    return ImageTensor(v, "unit")


@pytest.fixture(scope="session")
def tiny_config():
    """Smallest wiring-complete network: used wherever speed matters."""
    return DenoiserConfig(
        in_channels=6, out_channels=3, base_channels=8,
        channel_multipliers=(1, 2), blocks_per_level=1,
        time_embed_dim=16, seed=7,
    )


@pytest.fixture(scope="session")
def tiny_net(tiny_config):
    return init_denoiser(tiny_config)
