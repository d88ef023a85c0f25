"""Dense H x W x C image container shared by every stage of the pipeline.

Pixel data is kept in float64 numpy arrays. A `range_tag` declares the value
convention ("unit" [0,1], "symmetric" [-1,1], "byte" [0,255]); tensors that
are not range-bounded (noisy diffusion states, network activations) carry
``range_tag=None``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

RANGE_BOUNDS = {
    "unit": (0.0, 1.0),
    "symmetric": (-1.0, 1.0),
    "byte": (0.0, 255.0),
}


@dataclass(frozen=True)
class ImageTensor:
    """Real-valued image of shape (height, width, channels)."""

    values: np.ndarray
    range_tag: Optional[str] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3:
            raise ValueError(f"image values must be 2-D or 3-D, got shape {v.shape}")
        if self.range_tag is not None and self.range_tag not in RANGE_BOUNDS:
            raise ValueError(f"unknown range_tag {self.range_tag!r}")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray, range_tag: Optional[str] = "keep") -> "ImageTensor":
        tag = self.range_tag if range_tag == "keep" else range_tag
        return ImageTensor(values, tag)

    def clamp(self) -> "ImageTensor":
        """Clip values into the declared range. Requires a range_tag."""
        if self.range_tag is None:
            raise ValueError("cannot clamp an untagged image")
        lo, hi = RANGE_BOUNDS[self.range_tag]
        return ImageTensor(np.clip(self.values, lo, hi), self.range_tag)

    def allclose(self, other: "ImageTensor", atol: float = 0.0, rtol: float = 0.0) -> bool:
        return self.shape == other.shape and np.allclose(
            self.values, other.values, atol=atol, rtol=rtol
        )


def constant(height: int, width: int, channels: int, value: float,
             range_tag: Optional[str] = "unit") -> ImageTensor:
    return ImageTensor(np.full((height, width, channels), value, dtype=np.float64), range_tag)


def zeros_like(img: ImageTensor, range_tag: Optional[str] = None) -> ImageTensor:
    return ImageTensor(np.zeros(img.shape), range_tag)


def require_same_shape(a: ImageTensor, b: ImageTensor, what: str = "images") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} have mismatched shapes {a.shape} vs {b.shape}")


def to_unit(img: ImageTensor) -> ImageTensor:
    """Convert a tagged image to the [0,1] convention."""
    if img.range_tag == "unit":
        return img
    if img.range_tag == "symmetric":
        return ImageTensor((img.values + 1.0) / 2.0, "unit")
    if img.range_tag == "byte":
        return ImageTensor(img.values / 255.0, "unit")
    raise ValueError("cannot convert an untagged image to unit range")


def to_symmetric(img: ImageTensor) -> ImageTensor:
    """Convert a tagged image to the [-1,1] convention used by the chain."""
    if img.range_tag == "symmetric":
        return img
    return ImageTensor(to_unit(img).values * 2.0 - 1.0, "symmetric")


def to_byte(img: ImageTensor) -> ImageTensor:
    if img.range_tag == "byte":
        return img
    return ImageTensor(to_unit(img).values * 255.0, "byte")


def quantize_u8(img: ImageTensor) -> np.ndarray:
    """Round to uint8 for PNG export (deterministic half-up via rint)."""
    b = to_byte(img).clamp().values
    return np.rint(b).astype(np.uint8)


def load_png(path: Path | str) -> ImageTensor:
    """Decode an 8-bit image file as an RGB unit-range tensor."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return ImageTensor(arr, "unit")


def save_png(img: ImageTensor, path: Path | str) -> None:
    arr = quantize_u8(img)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path)
