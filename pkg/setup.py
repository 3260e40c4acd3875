"""Build script: compiles the simplex kernel extension when possible.

The compiled kernel is optional.  If Cython or a C compiler is missing the
install still succeeds and milpnet falls back to the pure-numpy kernel at
import time.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Swallow compiler failures so the pure-Python install still works."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure is non-fatal
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"WARNING: building the compiled simplex kernel failed ({exc}); "
            "milpnet will use the pure-Python kernel.",
            file=sys.stderr,
        )


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print(
            "WARNING: Cython not available; skipping the compiled simplex kernel.",
            file=sys.stderr,
        )
        return []
    return cythonize(
        ["src/milpnet/solver/_kernel.pyx"],
        compiler_directives={"language_level": "3"},
    )


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
