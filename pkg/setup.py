import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; syncsgd.kernels falls back to numpy
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("SYNCSGD_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "syncsgd._ckernels",
                ["src/syncsgd/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # no -ffast-math: reductions must stay IEEE-exact across ranks
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
