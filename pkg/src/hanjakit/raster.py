"""Immutable 8-bit image buffers and PNG/JPEG I/O."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image


@dataclass(frozen=True, eq=False)
class Raster:
    """Row-major uint8 pixels, shape (height, width) or (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.dtype != np.uint8:
            raise TypeError(f"raster pixels must be uint8, got {arr.dtype}")
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise ValueError(f"raster must be (H, W) or (H, W, 3), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"raster must be at least 1x1, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        if arr is self.pixels:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_bytes(cls, width: int, height: int, channels: int, buffer: bytes) -> "Raster":
        if len(buffer) != width * height * channels:
            raise ValueError(
                f"buffer length {len(buffer)} != {width}x{height}x{channels}"
            )
        shape = (height, width) if channels == 1 else (height, width, channels)
        return cls(np.frombuffer(buffer, dtype=np.uint8).reshape(shape))

    @classmethod
    def blank(cls, width: int, height: int, channels: int = 1, value: int = 255) -> "Raster":
        shape = (height, width) if channels == 1 else (height, width, channels)
        return cls(np.full(shape, value, dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def to_channels(self, channels: int) -> "Raster":
        if channels == self.channels:
            return self
        mode = "L" if channels == 1 else "RGB"
        return Raster(np.asarray(Image.fromarray(self.pixels).convert(mode)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"Raster({self.width}x{self.height}x{self.channels})"


def load_raster(path: Union[str, Path]) -> Raster:
    """Decode a PNG or JPEG file to grayscale or RGB."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if img.mode in ("RGBA", "P", "CMYK", "YCbCr") else "L")
        return Raster(np.asarray(img))


def encode_png(raster: Raster) -> bytes:
    buf = io.BytesIO()
    # fixed compression settings keep the encoded bytes reproducible
    Image.fromarray(raster.pixels).save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def save_png(raster: Raster, path: Union[str, Path]) -> None:
    Path(path).write_bytes(encode_png(raster))
