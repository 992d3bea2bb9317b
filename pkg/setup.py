"""Build script for the optional compiled kernels.

The package is fully functional without the extension; `sdfseg._kernels`
falls back to the numpy implementations when the compiled module is not
importable.  No -ffast-math: the kernels must be bit-reproducible.
"""

import os

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    if not os.path.exists("src/sdfseg/_kernels/_fastcore.pyx"):
        raise ImportError("extension source missing; installing pure-python only")
    ext_modules = cythonize(
        [
            Extension(
                "sdfseg._kernels._fastcore",
                ["src/sdfseg/_kernels/_fastcore.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
