"""Builds the optional compiled simulator kernels.

Without Cython or a C compiler the package still installs and runs on the
numpy fallback in ``smallcell._pykernels``.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("smallcell._ckernels", ["src/smallcell/_ckernels.pyx"],
                   extra_compile_args=["-O3"], optional=True)],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
