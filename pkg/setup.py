import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("RVIC_PURE_PYTHON"):
    ext_modules = cythonize(
        [
            Extension(
                "rvic._kernels._kernel",
                ["src/rvic/_kernels/_kernel.pyx"],
                include_dirs=[np.get_include()],
                # no -ffast-math / FMA: results must match the Python fallback bit for bit
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
