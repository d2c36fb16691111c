"""Build script for the optional compiled trial kernels.

The package is fully functional without the extension: _kernels falls back
to a numpy implementation that produces bit-identical output. Set
POLYGRAD_NO_EXT=1 to skip the extension build entirely.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("POLYGRAD_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext = Extension(
            "polygrad._speedups",
            ["src/polygrad/_speedups.pyx"],
            include_dirs=[numpy.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            # -ffp-contract=off keeps the C arithmetic free of fused
            # multiply-adds so results match the numpy path bit for bit.
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )
        ext_modules = cythonize([ext], language_level=3)
    except Exception:
        ext_modules = []

setup(ext_modules=ext_modules)
