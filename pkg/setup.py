import os

from setuptools import Extension, setup

# The compiled kernels are an optimization, not a requirement: the package
# falls back to bdbench._kernels_py if the extension is absent.  Set
# BDBENCH_PURE_PYTHON=1 to skip the build on purpose.
ext_modules = []
if os.environ.get("BDBENCH_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "bdbench._kernels",
                    ["src/bdbench/_kernels.pyx"],
                    # No -ffast-math and no FMA contraction: the compiled and
                    # pure-Python backends must produce bit-identical
                    # trajectories.
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
