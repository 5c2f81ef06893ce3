"""Build the optional Cython kernels.

The package works without them; ``modscc._kernels`` falls back to numpy
implementations when the extension is missing.  Set ``MODSCC_NO_EXT=1`` to
skip compilation entirely.
"""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("MODSCC_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "modscc._kernels._ckernels",
                ["src/modscc/_kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no -ffast-math: kernels must stay bit-identical to the numpy path
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
