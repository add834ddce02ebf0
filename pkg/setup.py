"""Build script for the optional compiled assignment kernel.

The package is pure Python except for layermatch._assign_cy, a Cython
translation of the augmenting-path assignment solver. If Cython or a C
compiler is unavailable the build falls back to a pure-Python install;
the solver backend is then selected at import time in layermatch.assign.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, warn and continue if not."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: compiled assignment kernel skipped ({exc}); "
            "falling back to the pure-Python solver",
            file=sys.stderr,
        )


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print(
            "warning: Cython not available; building without the compiled "
            "assignment kernel",
            file=sys.stderr,
        )
        return []
    ext = Extension("layermatch._assign_cy", ["src/layermatch/_assign_cy.pyx"])
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
