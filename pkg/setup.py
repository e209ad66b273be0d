"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so any failure to build it is downgraded to a
warning rather than aborting the install.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, etc.
            warnings.warn(f"skipping compiled kernels ({exc}); using NumPy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"skipping {ext.name} ({exc}); using NumPy fallback")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        warnings.warn("Cython not available; using NumPy fallback kernels")
        return []
    ext = Extension(
        "fbcev._kernels._core",
        ["src/fbcev/_kernels/_core.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
