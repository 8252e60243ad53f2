"""Build script for the optional compiled pixel-kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so build failures here are non-fatal.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "reraw._kernels._pixelops",
                ["src/reraw/_kernels/_pixelops.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
