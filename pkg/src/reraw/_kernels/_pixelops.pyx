# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Single-pass compiled Bayer kernels.

Each function fuses the strided gather/scatter, the affine black/white level
transform and the clamp into one pass over the image, avoiding the chain of
full-size temporaries the numpy path allocates. Outputs are bit-identical to
the numpy fallback (same float64 intermediate, one rounding).

Gamma powers deliberately stay on the numpy side: np.power's vectorized
float loop beats a scalar libm call per element by a wide margin.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport rint

cnp.import_array()


def pack_normalize_u16(const cnp.uint16_t[:, ::1] mosaic,
                       double black_level, double white_level):
    cdef Py_ssize_t h2 = mosaic.shape[0] // 2
    cdef Py_ssize_t w2 = mosaic.shape[1] // 2
    out_arr = np.empty((h2, w2, 4), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef double scale = 1.0 / (white_level - black_level)
    cdef double v
    cdef Py_ssize_t y, x, dy, dx, c
    for y in range(h2):
        for x in range(w2):
            for c in range(4):
                dy = c >> 1
                dx = c & 1
                v = (mosaic[2 * y + dy, 2 * x + dx] - black_level) * scale
                if v < 0.0:
                    v = 0.0
                elif v > 1.0:
                    v = 1.0
                out[y, x, c] = <float> v
    return out_arr


def unpack_denormalize_u16(const float[:, :, ::1] packed,
                           double black_level, double white_level):
    cdef Py_ssize_t h2 = packed.shape[0]
    cdef Py_ssize_t w2 = packed.shape[1]
    out_arr = np.empty((h2 * 2, w2 * 2), dtype=np.uint16)
    cdef cnp.uint16_t[:, ::1] out = out_arr
    cdef double span = white_level - black_level
    cdef double v
    cdef Py_ssize_t y, x, dy, dx, c
    for y in range(h2):
        for x in range(w2):
            for c in range(4):
                dy = c >> 1
                dx = c & 1
                v = rint(packed[y, x, c] * span + black_level)
                if v < 0.0:
                    v = 0.0
                elif v > white_level:
                    v = white_level
                out[2 * y + dy, 2 * x + dx] = <cnp.uint16_t> v
    return out_arr
