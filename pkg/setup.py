import sys

from setuptools import setup

# The compiled curve kernel is optional: the package falls back to the pure
# Python implementation in ctsim._ecpure when the extension is unavailable.
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ctsim._ecfast",
                ["src/ctsim/_ecfast.pyx"],
                extra_compile_args=["-O2"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    print("Cython not available; building without the compiled curve kernel", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
