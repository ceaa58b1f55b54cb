from setuptools import Extension, setup
from Cython.Build import cythonize

# Compiled stepping loop for the built-in test problems. The package falls
# back to the pure-Python engine at import time if this module is missing.
ext = Extension("bdf2dc._fastloop", ["src/bdf2dc/_fastloop.pyx"])

setup(
    ext_modules=cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)
