import os

from setuptools import Extension, setup

# The compiled kernels are an optional fast path; the package falls back to
# the numpy implementations in hsic.kernels.pykernels when the extension is
# absent.  Set HSIC_NO_EXT=1 to skip the build entirely.
ext_modules = []
if os.environ.get("HSIC_NO_EXT", "0") == "0":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("hsic.kernels._ckernels", ["src/hsic/kernels/_ckernels.pyx"])],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
