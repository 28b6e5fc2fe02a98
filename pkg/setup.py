"""Build script: compiles the optional Cython kernel core.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile only costs speed.
"""

from setuptools import setup, Extension

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy as np

    ext_modules = cythonize(
        [
            Extension(
                "gaitkit._kernels._core",
                ["src/gaitkit/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"gaitkit: skipping Cython core ({exc}); NumPy fallback will be used")

setup(ext_modules=ext_modules)
