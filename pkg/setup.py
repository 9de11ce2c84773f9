"""Build script: compiles the optional fast-kernel extension.

The package works without the extension (pure-numpy kernels are selected at
import time), so the extension build is allowed to fail.
"""
from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "ciodrelay._ckern",
        ["src/ciodrelay/_ckern.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    pass

setup(ext_modules=ext_modules)
