"""Build hook for the optional compiled kernels.

The package is pure python plus one accelerator extension. If Cython or a C
compiler is missing the build falls back to the numpy implementations in
fedinc._kernels_py, so installation never hard-fails on the extension.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fedinc._speedups",
                ["src/fedinc/_speedups.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    print("Cython not available, building without compiled kernels")

setup(ext_modules=ext_modules)
