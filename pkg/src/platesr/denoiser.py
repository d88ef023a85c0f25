"""Noise-prediction U-Net: contracting/expanding paths with per-level skip
connections, residual blocks with group normalization, sinusoidal timestep
conditioning, and self-attention at the lowest resolution only.

The network consumes the noisy HR state concatenated channel-wise with the
bicubic-upsampled conditioning image (6 input channels for RGB) and emits the
predicted noise field (3 channels).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .images import ImageTensor

CHECKPOINT_MAGIC = "PLATESR-CKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class DenoiserConfig:
    """Architectural hyperparameters. Defaults are the desk-scale preset."""

    in_channels: int = 6
    out_channels: int = 3
    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 2, 4, 4)
    blocks_per_level: int = 2
    time_embed_dim: int = 128
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channel_multipliers", tuple(self.channel_multipliers))

    def validate(self) -> None:
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.base_channels < 1:
            raise ValueError("base_channels must be positive")
        if len(self.channel_multipliers) < 2:
            raise ValueError("need at least 2 resolution levels")
        if any(m < 1 for m in self.channel_multipliers):
            raise ValueError("channel multipliers must be positive integers")
        if self.blocks_per_level < 1:
            raise ValueError("blocks_per_level must be positive")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2 != 0:
            raise ValueError("time_embed_dim must be even and >= 2")

    @property
    def levels(self) -> int:
        return len(self.channel_multipliers)

    @property
    def spatial_divisor(self) -> int:
        return 2 ** (self.levels - 1)

    def level_channels(self) -> list[int]:
        return [self.base_channels * m for m in self.channel_multipliers]


def timestep_embedding(t: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of a step index: (sin, cos) pairs at
    geometrically spaced frequencies (base 10000)."""
    if dim < 2 or dim % 2 != 0:
        raise ValueError(f"embedding dim must be even and >= 2, got {dim}")
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    angles = float(t) * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])


def _sinusoidal_embedding_torch(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half
    ).to(t.device)
    angles = t.double()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)


def _norm(channels: int) -> nn.GroupNorm:
    for groups in (8, 4, 2, 1):
        if channels % groups == 0:
            return nn.GroupNorm(groups, channels)
    return nn.GroupNorm(1, channels)


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, temb_dim: int):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(temb_dim, out_ch)
        self.norm2 = _norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.time_proj(torch.nn.functional.silu(temb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class SelfAttention2d(nn.Module):
    """Single-head attention over spatial positions."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = _norm(channels)
        self.qkv = nn.Conv2d(channels, channels * 3, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        q, k, v = self.qkv(self.norm(x)).reshape(b, 3, c, h * w).unbind(1)
        out = torch.nn.functional.scaled_dot_product_attention(
            q.transpose(1, 2)[:, None], k.transpose(1, 2)[:, None],
            v.transpose(1, 2)[:, None],
        )
        out = out[:, 0].transpose(1, 2).reshape(b, c, h, w)
        return x + self.proj(out)


class Downsample(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    """Nearest-neighbor x2 followed by a conv (avoids checkerboard artifacts)."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x):
        return self.conv(torch.nn.functional.interpolate(x, scale_factor=2, mode="nearest"))


class DenoiserUNet(nn.Module):
    """eps-prediction network. Callable as net(x, t) with x of shape
    (B, in_channels, H, W) and t a (B,) tensor of 1-based step indices."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        config.validate()
        self.config = config
        # test hook: scaling every encoder->decoder skip tensor
        self.skip_gain = 1.0

        temb = config.time_embed_dim
        self.temb_dim = temb
        self.time_mlp = nn.Sequential(
            nn.Linear(temb, temb * 4), nn.SiLU(), nn.Linear(temb * 4, temb * 4)
        )

        ch = config.level_channels()
        blocks = config.blocks_per_level
        self.stem = nn.Conv2d(config.in_channels, ch[0], 3, padding=1)

        self.enc_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        cur = ch[0]
        for i, chi in enumerate(ch):
            level = nn.ModuleList()
            for _ in range(blocks):
                level.append(ResidualBlock(cur, chi, temb * 4))
                cur = chi
            self.enc_blocks.append(level)
            if i < len(ch) - 1:
                self.downs.append(Downsample(chi))

        self.mid_block1 = ResidualBlock(ch[-1], ch[-1], temb * 4)
        self.mid_attn = SelfAttention2d(ch[-1])
        self.mid_block2 = ResidualBlock(ch[-1], ch[-1], temb * 4)

        self.dec_blocks = nn.ModuleList()
        self.ups = nn.ModuleList()
        for i in reversed(range(len(ch))):
            level = nn.ModuleList()
            level.append(ResidualBlock(ch[i] * 2, ch[i], temb * 4))
            for _ in range(blocks - 1):
                level.append(ResidualBlock(ch[i], ch[i], temb * 4))
            self.dec_blocks.append(level)
            if i > 0:
                self.ups.append(Upsample(ch[i], ch[i - 1]))

        self.head_norm = _norm(ch[0])
        self.head = nn.Conv2d(ch[0], config.out_channels, 3, padding=1)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if x.shape[1] != cfg.in_channels:
            raise ValueError(f"expected {cfg.in_channels} input channels, got {x.shape[1]}")
        if x.shape[2] % cfg.spatial_divisor or x.shape[3] % cfg.spatial_divisor:
            raise ValueError(
                f"spatial size {tuple(x.shape[2:])} not divisible by {cfg.spatial_divisor}"
            )
        temb = _sinusoidal_embedding_torch(t, self.temb_dim).to(x.dtype)
        temb = self.time_mlp(temb)

        h = self.stem(x)
        skips = []
        for i, level in enumerate(self.enc_blocks):
            for block in level:
                h = block(h, temb)
            skips.append(h)
            if i < len(self.enc_blocks) - 1:
                h = self.downs[i](h)

        h = self.mid_block1(h, temb)
        h = self.mid_attn(h)
        h = self.mid_block2(h, temb)

        for j, level in enumerate(self.dec_blocks):
            skip = skips[len(skips) - 1 - j]
            h = torch.cat([h, skip * self.skip_gain], dim=1)
            for block in level:
                h = block(h, temb)
            if j < len(self.ups):
                h = self.ups[j](h)

        return self.head(torch.nn.functional.silu(self.head_norm(h)))


def init_denoiser(config: DenoiserConfig) -> DenoiserUNet:
    """Build a network with seed-deterministic fan-in-scaled weights and a
    zero-initialized output layer (untrained prediction is exactly zero)."""
    config.validate()
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        net = DenoiserUNet(config)
    nn.init.zeros_(net.head.weight)
    nn.init.zeros_(net.head.bias)
    return net


def denoise(net: DenoiserUNet, noisy_plus_cond: ImageTensor, t: int) -> ImageTensor:
    """Single-image forward pass: (H, W, in_channels) -> (H, W, out_channels)."""
    cfg = net.config
    if noisy_plus_cond.channels != cfg.in_channels:
        raise ValueError(
            f"expected {cfg.in_channels} channels, got {noisy_plus_cond.channels}"
        )
    if int(t) < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    dtype = next(net.parameters()).dtype
    x = torch.from_numpy(
        np.ascontiguousarray(noisy_plus_cond.values.transpose(2, 0, 1))[None]
    ).to(dtype)
    with torch.no_grad():
        out = net(x, torch.tensor([int(t)], dtype=torch.long))
    return ImageTensor(out[0].double().numpy().transpose(1, 2, 0))


def parameter_count(config: DenoiserConfig) -> int:
    """Closed-form parameter count mirroring the layer shapes; kept in sync
    with the constructor by a test."""
    config.validate()
    temb = config.time_embed_dim
    ch = config.level_channels()
    blocks = config.blocks_per_level

    def res(cin, cout):
        n = 2 * cin                       # norm1
        n += cin * cout * 9 + cout        # conv1
        n += 4 * temb * cout + cout       # time projection
        n += 2 * cout                     # norm2
        n += cout * cout * 9 + cout       # conv2
        if cin != cout:
            n += cin * cout + cout        # 1x1 skip
        return n

    def attn(c):
        return 2 * c + c * 3 * c + 3 * c + c * c + c

    total = temb * temb * 4 + temb * 4          # time mlp layer 1
    total += temb * 4 * temb * 4 + temb * 4     # time mlp layer 2
    total += config.in_channels * ch[0] * 9 + ch[0]  # stem

    cur = ch[0]
    for i, chi in enumerate(ch):
        for _ in range(blocks):
            total += res(cur, chi)
            cur = chi
        if i < len(ch) - 1:
            total += chi * chi * 9 + chi        # downsample conv

    total += res(ch[-1], ch[-1]) + attn(ch[-1]) + res(ch[-1], ch[-1])

    for i in reversed(range(len(ch))):
        total += res(ch[i] * 2, ch[i])
        total += (blocks - 1) * res(ch[i], ch[i])
        if i > 0:
            total += ch[i] * ch[i - 1] * 9 + ch[i - 1]  # upsample conv

    total += 2 * ch[0]                           # head norm
    total += ch[0] * config.out_channels * 9 + config.out_channels
    return total


def save_checkpoint(net: DenoiserUNet, path: Path | str) -> None:
    """Write the container: one ASCII line `MAGIC version header_bytes`, a
    JSON header (config + tensor table with byte offsets), then raw
    little-endian float32 payloads. Round-trips bit-exactly."""
    state = net.state_dict()
    tensors = []
    payload = bytearray()
    for name, tensor in state.items():
        arr = tensor.detach().cpu().to(torch.float32).numpy()
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder == ">":
            arr = arr.astype("<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(arr.tobytes())
    header = json.dumps(
        {
            "format_version": CHECKPOINT_VERSION,
            "config": asdict(net.config),
            "tensors": tensors,
        },
        indent=0,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {len(header)}\n".encode("ascii"))
        fh.write(header)
        fh.write(bytes(payload))


def load_checkpoint(path: Path | str) -> DenoiserUNet:
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii").split()
        if len(first) != 3 or first[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a denoiser checkpoint")
        if int(first[1]) != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported format version {first[1]}")
        header = json.loads(fh.read(int(first[2])).decode("utf-8"))
        payload = fh.read()
    cfg_dict = dict(header["config"])
    cfg_dict["channel_multipliers"] = tuple(cfg_dict["channel_multipliers"])
    config = DenoiserConfig(**cfg_dict)
    net = DenoiserUNet(config)
    state = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=entry["offset"])
        state[entry["name"]] = torch.from_numpy(arr.copy().reshape(shape))
    net.load_state_dict(state)
    return net
