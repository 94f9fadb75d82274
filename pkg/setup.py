"""Build script: compiles the optional fast stepping kernel.

The extension is a pure speed layer; the package falls back to the
vectorized NumPy kernels when it is absent.  Set METRODIFF_NO_EXT=1 to
skip compilation entirely.
"""

import os

from setuptools import Extension, setup


def extension_modules():
    if os.environ.get("METRODIFF_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "metrodiff._kernels",
        sources=["src/metrodiff/_kernels.pyx"],
        # -ffp-contract=off keeps FMA out so the compiled kernels track the
        # NumPy fallback at the ulp level; no -ffast-math (we rely on IEEE
        # inf/nan semantics for the out-of-support sentinel).
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extension_modules())
