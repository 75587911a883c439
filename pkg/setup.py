import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "quasiconj.backends._gridc",
                ["src/quasiconj/backends/_gridc.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # no cython at build time: install runs on the pure NumPy backend
    ext_modules = []

setup(ext_modules=ext_modules)
