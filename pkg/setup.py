"""Build script for the optional Cython hypervolume core.

The package works without the compiled extension; ``moco_greedy.pareto``
falls back to the numpy implementation when the import fails.
"""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MOCO_GREEDY_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "moco_greedy.pareto._hvcore",
                    sources=["src/moco_greedy/pareto/_hvcore.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
