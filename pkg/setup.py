"""Build the optional Cython kernel.

The package works without it: ``exp3lgc._backend`` falls back to the
pure-Python kernel when the extension is missing.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("EXP3LGC_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "exp3lgc._ckernel",
                    ["src/exp3lgc/_ckernel.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
