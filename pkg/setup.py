"""Builds the optional compiled core. Without Cython (or a C compiler) the
package installs as pure Python and falls back to ``neuroloop._pykernels``."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("NEUROLOOP_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "neuroloop._core",
                    ["src/neuroloop/_core.pyx"],
                    include_dirs=[np.get_include()],
                    # no fast-math and no FMA contraction: results must match
                    # the Python kernels bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
