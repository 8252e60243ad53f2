"""Pure-numpy reference implementations of the pixel kernels.

These are the fallback used when the compiled extension is unavailable.
Arithmetic is done in float64 and rounded once at the end so that both
backends produce identical bits.
"""

import numpy as np


def pack_normalize_u16(mosaic, black_level, white_level):
    """RGGB mosaic (H, W) uint16 -> packed (H/2, W/2, 4) float32 in [0, 1]."""
    scale = 1.0 / (white_level - black_level)
    planes = np.stack(
        [
            mosaic[0::2, 0::2],
            mosaic[0::2, 1::2],
            mosaic[1::2, 0::2],
            mosaic[1::2, 1::2],
        ],
        axis=-1,
    ).astype(np.float64)
    planes -= black_level
    planes *= scale
    np.clip(planes, 0.0, 1.0, out=planes)
    return planes.astype(np.float32)


def unpack_denormalize_u16(packed, black_level, white_level):
    """Packed (H/2, W/2, 4) float in [0, 1] -> RGGB mosaic (H, W) uint16."""
    adu = packed.astype(np.float64) * (white_level - black_level) + black_level
    np.rint(adu, out=adu)
    np.clip(adu, 0.0, white_level, out=adu)
    adu = adu.astype(np.uint16)
    h2, w2 = adu.shape[:2]
    mosaic = np.empty((h2 * 2, w2 * 2), dtype=np.uint16)
    mosaic[0::2, 0::2] = adu[..., 0]
    mosaic[0::2, 1::2] = adu[..., 1]
    mosaic[1::2, 0::2] = adu[..., 2]
    mosaic[1::2, 1::2] = adu[..., 3]
    return mosaic


def clamped_power(arr, exponent):
    """Element-wise clip to [0, 1] followed by x**exponent, dtype preserved."""
    out = np.clip(arr, 0.0, 1.0)
    np.power(out, exponent, out=out)
    return out
