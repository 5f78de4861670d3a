import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    # the kernels draw from numpy bit generators in C, so link libnpyrandom
    npyrandom_dir = os.path.join(os.path.dirname(np.random.__file__), "lib")
    ext = Extension(
        "seqwatch._kernels",
        ["src/seqwatch/_kernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[npyrandom_dir],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
