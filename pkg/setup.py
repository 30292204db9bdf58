"""Build script for the optional compiled tick kernel.

The package is fully functional without the extension (a pure-Python
kernel with identical arithmetic is selected at import time), so the
extension is marked optional and any build failure degrades gracefully.

-ffp-contract=off keeps the C arithmetic bit-identical to the Python
backend: no FMA contraction, plain IEEE-754 double ops in source order.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    kernel = Extension(
        "pneutwin._kernel",
        sources=["src/pneutwin/_kernel.pyx"],
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
    kernel.optional = True
    ext_modules = cythonize(
        [kernel],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
