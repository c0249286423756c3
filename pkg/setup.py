"""Builds the optional Cython kernels; the package works without them."""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "powermean_ssl._ckernels",
                ["src/powermean_ssl/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                language="c++",
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
