"""Build the optional compiled split/predict kernels.

The package works without them: ``arot.kernels`` falls back to the
numpy implementation when ``arot._kernels`` cannot be imported.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - no Cython, pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "arot._kernels",
                ["src/arot/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
