"""Build script: compiles the optional SMO extension.

The package works without the extension (a numpy fallback is selected at
import time), so any build failure here downgrades to a pure-Python install
instead of aborting.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/groupmtl/_smo.pyx",
        compiler_directives={"language_level": 3},
    )
    include_dirs = [numpy.get_include()]
    for ext in ext_modules:
        ext.include_dirs = include_dirs
except Exception as exc:  # pragma: no cover - environment dependent
    import sys

    print(f"groupmtl: skipping compiled SMO core ({exc!r})", file=sys.stderr)

setup(ext_modules=ext_modules)
