"""Build script for the optional compiled kernels.

The package works without the extension (a pure-NumPy fallback is selected
at import time); building it just makes the per-IMU-step inner loops much
faster. Set VIOMC_SKIP_EXT=1 to skip compilation explicitly.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("VIOMC_SKIP_EXT", "").strip().lower() not in ("1", "true", "yes"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "viomc._kernels._native",
                    sources=["src/viomc/_kernels/_native.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError as err:
        print(f"viomc: building without compiled kernels ({err})")

setup(ext_modules=ext_modules)
