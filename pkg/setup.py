"""Builds the optional compiled scan kernel.

The package is fully functional without the extension (a vectorized numpy
fallback is selected at import time); the Cython kernel just makes the
sequential state-space recurrence fast. Build failures are non-fatal.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "doaformer.numerics._scan_cy",
        sources=["src/doaformer/numerics/_scan_cy.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    ext.optional = True
    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    pass

setup(ext_modules=ext_modules)
