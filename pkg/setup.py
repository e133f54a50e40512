"""Build script for the optional compiled integrator kernel.

The package is pure Python except for gradsync._kernels, a Cython
extension holding the RK4 stepping loop used by the Monte Carlo
driver.  If Cython or a C compiler is unavailable the extension is
simply skipped and the package falls back to the numpy kernel at
import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "gradsync._kernels",
                ["src/gradsync/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
