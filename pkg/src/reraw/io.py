"""File I/O: headerless 16-bit raw mosaics and 8/16-bit PNG images.

Raw mosaics are stored as 16-bit little-endian unsigned integers, row-major,
with no header; width/height/black/white live in the dataset manifest.
"""

from __future__ import annotations

import os
from pathlib import Path

import cv2
import numpy as np

from .errors import InputError

_RAW_DTYPE = np.dtype("<u2")


def read_raw_file(path: str | Path, width: int, height: int) -> np.ndarray:
    """Read a headerless 16-bit LE mosaic of the given dimensions."""
    path = Path(path)
    expected = width * height * _RAW_DTYPE.itemsize
    try:
        size = os.path.getsize(path)
    except OSError as exc:
        raise InputError(f"cannot stat raw file {path}: {exc}") from exc
    if size != expected:
        raise InputError(
            f"raw file {path} is {size} bytes, expected {expected} for {width}x{height}x16-bit"
        )
    data = np.fromfile(path, dtype=_RAW_DTYPE, count=width * height)
    return data.reshape(height, width).astype(np.uint16)


def write_raw_file(path: str | Path, mosaic: np.ndarray) -> None:
    if mosaic.dtype != np.uint16:
        raise InputError(f"raw export expects uint16, got {mosaic.dtype}")
    mosaic.astype(_RAW_DTYPE).tofile(path)


def read_rgb_png(path: str | Path) -> np.ndarray:
    """Load an 8- or 16-bit PNG as float32 RGB in [0, 1]."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise InputError(f"cannot read image {path}")
    if img.ndim == 2:
        raise InputError(f"{path} is single-channel; expected 3-channel RGB")
    if img.shape[2] == 4:
        img = img[:, :, :3]
    img = img[:, :, ::-1]  # BGR -> RGB
    if img.dtype == np.uint8:
        return img.astype(np.float32) / 255.0
    if img.dtype == np.uint16:
        return img.astype(np.float32) / 65535.0
    raise InputError(f"{path} has unsupported dtype {img.dtype}")


def write_rgb_png(path: str | Path, rgb: np.ndarray, bit_depth: int = 8) -> None:
    """Write float [0, 1] RGB to an 8- or 16-bit PNG."""
    if bit_depth == 8:
        scaled = np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    elif bit_depth == 16:
        scaled = np.rint(np.clip(rgb, 0.0, 1.0) * 65535.0).astype(np.uint16)
    else:
        raise InputError(f"bit_depth must be 8 or 16, got {bit_depth}")
    ok = cv2.imwrite(str(path), scaled[:, :, ::-1])
    if not ok:
        raise InputError(f"failed to write image {path}")
