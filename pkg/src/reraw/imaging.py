"""Core image types and Bayer/gamma algebra.

Conventions used throughout the package:

* RGGB mosaics are single-channel uint16 arrays of even height and width,
  holding raw sensor counts (ADU).
* Packed images rearrange each 2x2 Bayer cell into four aligned planes in
  the fixed channel order ``[R, G1, G2, B]`` (G1 = row-0 green, G2 = row-1
  green) and are normalized to float32 in [0, 1] via the sensor's
  black/white levels. Normalization clamps rather than errors below the
  black level, since real sensors emit sub-black noise.
* RGB images are float arrays of shape (H, W, 3) in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionError, ParameterError, ValueRangeError

BAYER_RGGB = "RGGB"

# Packed channel order and the (row, col) offset of each channel in a 2x2 cell.
CH_R, CH_G1, CH_G2, CH_B = 0, 1, 2, 3
CHANNEL_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class SensorProfile:
    """Per-sensor metadata needed to normalize raw counts."""

    name: str
    black_level: int
    white_level: int
    bayer_pattern: str = BAYER_RGGB

    def __post_init__(self):
        if not 0 <= self.black_level < self.white_level:
            raise ParameterError(
                f"require 0 <= black_level < white_level, got "
                f"({self.black_level}, {self.white_level})"
            )
        if self.bayer_pattern != BAYER_RGGB:
            raise ParameterError(f"only RGGB sensors are supported, got {self.bayer_pattern!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "black_level": int(self.black_level),
            "white_level": int(self.white_level),
            "bayer_pattern": self.bayer_pattern,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensorProfile":
        return cls(
            name=str(d["name"]),
            black_level=int(d["black_level"]),
            white_level=int(d["white_level"]),
            bayer_pattern=str(d.get("bayer_pattern", BAYER_RGGB)),
        )


@dataclass
class RawMosaic:
    """Single-channel Bayer mosaic of raw sensor counts."""

    data: np.ndarray
    profile: SensorProfile

    def __post_init__(self):
        if self.data.ndim != 2:
            raise DimensionError(f"mosaic must be 2-D, got shape {self.data.shape}")
        h, w = self.data.shape
        if h % 2 or w % 2:
            raise DimensionError(f"mosaic dims must be even for 2x2 Bayer tiling, got {h}x{w}")
        if not np.issubdtype(self.data.dtype, np.integer):
            raise ValueRangeError(f"mosaic must hold integer ADU, got dtype {self.data.dtype}")
        mx = int(self.data.max(initial=0))
        if mx > self.profile.white_level:
            raise ValueRangeError(
                f"mosaic value {mx} exceeds white level {self.profile.white_level}"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class PackedRawImage:
    """Normalized (H/2, W/2, 4) RGGB planes in [0, 1]."""

    data: np.ndarray
    profile: SensorProfile

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 4:
            raise DimensionError(f"packed image must be (H/2, W/2, 4), got {self.data.shape}")
        lo, hi = float(self.data.min(initial=0.0)), float(self.data.max(initial=0.0))
        if lo < 0.0 or hi > 1.0:
            raise ValueRangeError(f"packed values must lie in [0, 1], got [{lo}, {hi}]")


@dataclass
class RgbImage:
    """Processed RGB counterpart of a raw image, float in [0, 1]."""

    data: np.ndarray
    image_id: str = field(default="")

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise DimensionError(f"RGB image must be (H, W, 3), got {self.data.shape}")
        lo, hi = float(self.data.min(initial=0.0)), float(self.data.max(initial=0.0))
        if lo < 0.0 or hi > 1.0:
            raise ValueRangeError(f"RGB values must lie in [0, 1], got [{lo}, {hi}]")


def pack_rggb(mosaic: RawMosaic) -> PackedRawImage:
    """Pack a Bayer mosaic into normalized [R, G1, G2, B] planes.

    ``out[y, x, c] = clamp((mosaic[2y+dy, 2x+dx] - black) / (white - black), 0, 1)``
    with (dy, dx) per ``CHANNEL_OFFSETS``.
    """
    packed = _kernels.pack_normalize_u16(
        mosaic.data, mosaic.profile.black_level, mosaic.profile.white_level
    )
    return PackedRawImage(data=packed, profile=mosaic.profile)


def unpack_rggb(packed: PackedRawImage) -> RawMosaic:
    """Inverse of :func:`pack_rggb`; denormalization rounds to the nearest ADU."""
    mosaic = _kernels.unpack_denormalize_u16(
        packed.data, packed.profile.black_level, packed.profile.white_level
    )
    return RawMosaic(data=mosaic, profile=packed.profile)


def _check_gamma(gamma: float) -> float:
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    return float(gamma)


def gamma_correct(img: np.ndarray, gamma: float) -> np.ndarray:
    """Element-wise x**gamma on values in [0, 1] (0**gamma defined as 0)."""
    g = _check_gamma(gamma)
    return _kernels.clamped_power(img, g)


def degamma(img: np.ndarray, gamma: float) -> np.ndarray:
    """Element-wise x**(1/gamma); inverse of :func:`gamma_correct`."""
    g = _check_gamma(gamma)
    return _kernels.clamped_power(img, 1.0 / g)


def crop_to_even(rgb: np.ndarray) -> np.ndarray:
    """Drop the last row/column where needed so both dims are even.

    Cropping (rather than padding) preserves the Bayer phase of the top-left
    pixel.
    """
    h, w = rgb.shape[:2]
    return rgb[: h - h % 2, : w - w % 2]
