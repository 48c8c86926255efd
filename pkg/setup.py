"""Build script for the optional compiled PPP kernel.

The package works without the extension (a NumPy fallback is selected at
import time); building it just makes decision-table construction faster.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "ppfutility._kernels",
                ["src/ppfutility/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
