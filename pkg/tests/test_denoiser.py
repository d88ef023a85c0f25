import numpy as np
import pytest
import torch

from platesr import (
    DenoiserConfig,
    denoise,
    init_denoiser,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
    timestep_embedding,
)
from platesr.denoiser import _sinusoidal_embedding_torch

import oracles
from conftest import random_image

# L2 distances computed by the reference script before the build (dim 64)
TEMB_DISTANCES = {(1, 10): 4.5857, (1, 100): 5.7334, (10, 100): 6.1641}


# --- config validation ---

@pytest.mark.parametrize("kwargs", [
    {"in_channels": 0}, {"out_channels": 0}, {"base_channels": 0},
    {"channel_multipliers": (1,)}, {"channel_multipliers": (1, 0)},
    {"blocks_per_level": 0}, {"time_embed_dim": 15}, {"time_embed_dim": 0},
])
def test_config_rejects_bad_fields(kwargs):
    with pytest.raises(ValueError):
        DenoiserConfig(**kwargs).validate()


# --- init ---

def test_init_is_deterministic_per_seed(tiny_config):
    a = init_denoiser(tiny_config)
    b = init_denoiser(tiny_config)
    for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert ka == kb
        assert torch.equal(va, vb)


def test_different_seed_changes_weights(tiny_config):
    import dataclasses
    other = dataclasses.replace(tiny_config, seed=tiny_config.seed + 1)
    a = init_denoiser(tiny_config)
    b = init_denoiser(other)
    assert not torch.equal(a.stem.weight, b.stem.weight)


def test_untrained_network_predicts_zero(tiny_net, rng):
    img = random_image(rng, 16, 16, 6, None)
    out = denoise(tiny_net, img, 3)
    assert out.shape == (16, 16, 3)
    assert np.all(out.values == 0.0)


def test_output_shape_at_full_resolution():
    config = DenoiserConfig()  # 192x192-capable default
    net = init_denoiser(config)
    x = torch.zeros(1, 6, 192, 192)
    out = net(x, torch.tensor([1], dtype=torch.long))
    assert tuple(out.shape) == (1, 3, 192, 192)


def test_forward_validates_channels_and_divisibility(tiny_net, rng):
    with pytest.raises(ValueError):
        denoise(tiny_net, random_image(rng, 16, 16, 3, None), 1)
    with pytest.raises(ValueError):
        denoise(tiny_net, random_image(rng, 15, 16, 6, None), 1)
    with pytest.raises(ValueError):
        denoise(tiny_net, random_image(rng, 16, 16, 6, None), 0)


# --- timestep embedding ---

def test_embedding_range_and_determinism():
    e = timestep_embedding(17, 64)
    assert e.shape == (64,)
    assert np.all(e >= -1.0) and np.all(e <= 1.0)
    assert np.array_equal(e, timestep_embedding(17, 64))


def test_embedding_matches_elementwise_reference():
    for t in (1, 10, 100, 999):
        assert np.allclose(timestep_embedding(t, 64),
                           oracles.sinusoid_reference(t, 64), atol=1e-12)


def test_embedding_distances_between_steps():
    for (a, b), want in TEMB_DISTANCES.items():
        d = np.linalg.norm(timestep_embedding(a, 64) - timestep_embedding(b, 64))
        assert d > 0.1
        assert abs(d - want) < 1e-3


def test_embedding_rejects_odd_dim_and_bad_t():
    with pytest.raises(ValueError):
        timestep_embedding(1, 63)
    with pytest.raises(ValueError):
        timestep_embedding(0, 64)


def test_torch_embedding_matches_numpy():
    ts = torch.tensor([1, 10, 100], dtype=torch.long)
    got = _sinusoidal_embedding_torch(ts, 32).numpy()
    for row, t in zip(got, (1, 10, 100)):
        assert np.allclose(row, timestep_embedding(t, 32), atol=1e-12)


# --- parameter accounting ---

@pytest.mark.parametrize("config", [
    DenoiserConfig(base_channels=8, channel_multipliers=(1, 2), blocks_per_level=1,
                   time_embed_dim=16),
    DenoiserConfig(base_channels=16, channel_multipliers=(1, 2), blocks_per_level=1,
                   time_embed_dim=16),
    DenoiserConfig(base_channels=8, channel_multipliers=(1, 2, 4), blocks_per_level=2,
                   time_embed_dim=32),
    DenoiserConfig(),
])
def test_parameter_count_matches_closed_form(config):
    net = init_denoiser(config)
    assert sum(p.numel() for p in net.parameters()) == parameter_count(config)


def test_doubling_base_channels_grows_count():
    small = DenoiserConfig(base_channels=8, channel_multipliers=(1, 2),
                           blocks_per_level=1, time_embed_dim=16)
    big = DenoiserConfig(base_channels=16, channel_multipliers=(1, 2),
                         blocks_per_level=1, time_embed_dim=16)
    assert parameter_count(big) > parameter_count(small)


# --- gradients ---

def test_probed_weight_gradient_matches_finite_differences():
    config = DenoiserConfig(base_channels=8, channel_multipliers=(1, 2),
                            blocks_per_level=1, time_embed_dim=16, seed=3)
    net = init_denoiser(config).double()
    # randomize the zero head so the probe sees a nontrivial function
    torch.manual_seed(0)
    with torch.no_grad():
        net.head.weight.normal_(0, 0.05)
        net.head.bias.normal_(0, 0.05)
    x = torch.randn(1, 6, 16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
    t = torch.tensor([5], dtype=torch.long)

    out = net(x, t).mean()
    net.zero_grad()
    out.backward()
    probe = net.mid_block1.conv1.weight
    analytic = probe.grad[0, 0, 0, 0].item()

    h = 1e-6
    with torch.no_grad():
        probe[0, 0, 0, 0] += h
        up = net(x, t).mean().item()
        probe[0, 0, 0, 0] -= 2 * h
        down = net(x, t).mean().item()
        probe[0, 0, 0, 0] += h
    numeric = (up - down) / (2 * h)
    assert abs(analytic - numeric) <= 1e-3 * max(abs(numeric), 1e-12)


# --- skip connections ---

def test_ablating_skip_connections_changes_output(tiny_config, rng):
    net = init_denoiser(tiny_config)
    torch.manual_seed(0)
    with torch.no_grad():
        net.head.weight.normal_(0, 0.05)
    img = random_image(rng, 16, 16, 6, None)
    normal = denoise(net, img, 3)
    net.skip_gain = 0.0
    ablated = denoise(net, img, 3)
    net.skip_gain = 1.0
    assert not np.allclose(normal.values, ablated.values)


# --- checkpoint container ---

def test_checkpoint_round_trip_is_bit_exact(tmp_path, rng):
    config = DenoiserConfig(base_channels=8, channel_multipliers=(1, 2),
                            blocks_per_level=1, time_embed_dim=16, seed=11)
    net = init_denoiser(config)
    torch.manual_seed(2)
    with torch.no_grad():
        net.head.weight.normal_(0, 0.1)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)
    assert loaded.config == config
    for (ka, va), (kb, vb) in zip(net.state_dict().items(),
                                  loaded.state_dict().items()):
        assert ka == kb
        assert va.numpy().tobytes() == vb.numpy().tobytes()

    img = random_image(rng, 16, 16, 6, None)
    assert np.array_equal(denoise(net, img, 7).values, denoise(loaded, img, 7).values)

    # saving the loaded copy reproduces the file byte-for-byte
    path2 = tmp_path / "net2.ckpt"
    save_checkpoint(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_header_is_plain_text(tmp_path, tiny_net):
    path = tmp_path / "net.ckpt"
    save_checkpoint(tiny_net, path)
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii")
        assert first.startswith("PLATESR-CKPT 1 ")
        header_len = int(first.split()[2])
        import json
        header = json.loads(fh.read(header_len))
    assert header["format_version"] == 1
    assert {"name", "shape", "offset"} <= set(header["tensors"][0])
    assert header["config"]["base_channels"] == tiny_net.config.base_channels


def test_checkpoint_rejects_foreign_files(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"something else entirely\n")
    with pytest.raises(ValueError):
        load_checkpoint(bad)
