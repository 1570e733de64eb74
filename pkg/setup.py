"""Build hook for the optional compiled round kernel.

The package is pure Python plus one Cython extension (qdkd._fastcore) that
reimplements the Monte-Carlo round loop for the built-in strategies.  The
extension is marked optional: if no C toolchain is available the install
still succeeds and the package falls back to the pure backend at import.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - source dist without Cython
    cythonize = None

extensions = [
    Extension(
        "qdkd._fastcore",
        ["src/qdkd/_fastcore.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # contraction off keeps the kernel's floating point bit-identical to
        # the numpy reference path (no fused multiply-adds)
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, language_level=3) if cythonize else [])
