"""Hot pixel kernels with a compiled fast path.

At import time the Cython extension is preferred; if it is missing (no
compiler at install time) or ``RERAW_PURE_PYTHON`` is set in the
environment, the numpy implementations take over. ``BACKEND`` records which
one is active; ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

import numpy as np

from . import _numpy as _np_impl

if os.environ.get("RERAW_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _pixelops as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None

BACKEND = "numpy" if _compiled is None else "compiled"


def backend_name() -> str:
    return BACKEND


def pack_normalize_u16(mosaic: np.ndarray, black_level: float, white_level: float) -> np.ndarray:
    """Fused RGGB gather + [black, white] -> [0, 1] normalization with clamp."""
    if _compiled is not None:
        return _compiled.pack_normalize_u16(
            np.ascontiguousarray(mosaic, dtype=np.uint16), float(black_level), float(white_level)
        )
    return _np_impl.pack_normalize_u16(mosaic, black_level, white_level)


def unpack_denormalize_u16(packed: np.ndarray, black_level: float, white_level: float) -> np.ndarray:
    """Fused [0, 1] -> ADU denormalization (round to nearest) + RGGB scatter."""
    if _compiled is not None:
        return _compiled.unpack_denormalize_u16(
            np.ascontiguousarray(packed, dtype=np.float32), float(black_level), float(white_level)
        )
    return _np_impl.unpack_denormalize_u16(packed, black_level, white_level)


def clamped_power(arr: np.ndarray, exponent: float) -> np.ndarray:
    """Element-wise clip to [0, 1] then power; float32/float64 in, same out.

    Always the numpy path: np.power's vectorized loop outruns a scalar
    per-element libm pow (measured 5-12x faster at full-frame sizes), so
    there is nothing to gain from compiling this one.
    """
    return _np_impl.clamped_power(arr, exponent)
