"""Build script. The compiled kernel is optional: if Cython or a C compiler
is unavailable the package installs anyway and falls back to the pure-Python
kernel at import time."""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, etc.
            print(f"warning: compiled kernel skipped ({exc}); using pure-Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); using pure-Python fallback")


ext_modules = []
if os.environ.get("EHSCHED_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("ehsched._kernel._fast", ["src/ehsched/_kernel/_fast.pyx"])],
            language_level=3,
        )
    except ImportError:
        print("warning: Cython not available; using pure-Python kernel")

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
