"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Swallow compiler failures; mvg._core falls back to pure numpy."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: kernel extension build skipped ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: building {ext.name} failed ({exc}); "
                  "using pure-python kernels")


def make_extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "mvg._core._ckernels",
        ["src/mvg/_core/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
