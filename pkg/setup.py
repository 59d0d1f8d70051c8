"""Build script for the optional compiled edge-tracing kernels.

The package works without the extension (a pure numpy fallback is selected
at import time); building it just makes Canny's non-maximum suppression and
hysteresis loops much faster.
"""
from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "iir_edit.kernels._canny_cy",
                ["src/iir_edit/kernels/_canny_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
