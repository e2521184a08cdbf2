"""Build script: compiles the optional fast-kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); any failure here degrades to a pure-Python install.
Set EVPOSE_NO_EXT=1 to skip the compile step explicitly.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("EVPOSE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "evpose.kernels._ckernels",
                    sources=["src/evpose/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except Exception as exc:  # pragma: no cover - build-environment dependent
        print(f"evpose: skipping compiled kernels ({exc}); using numpy fallback")

setup(ext_modules=ext_modules)
