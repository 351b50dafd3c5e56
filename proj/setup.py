"""Builds the `_core` pybind11 extension through the project's CMake tree."""

import os
import pathlib
import subprocess
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name: str):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext: CMakeExtension) -> None:
        source_dir = pathlib.Path(__file__).resolve().parent
        build_dir = pathlib.Path(self.build_temp) / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        cmake_args = [
            "-DCMAKE_BUILD_TYPE=Release",
            "-DXMDG_BUILD_PYTHON=ON",
            f"-DPython_EXECUTABLE={sys.executable}",
        ]
        prefix = os.environ.get("CMAKE_PREFIX_PATH")
        if prefix:
            cmake_args.append(f"-DCMAKE_PREFIX_PATH={prefix}")

        subprocess.run(
            ["cmake", "-S", str(source_dir), "-B", str(build_dir), *cmake_args],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_core", "--parallel"],
            check=True,
        )

        built = next(build_dir.glob("_core.*.so"), None) or next(
            build_dir.glob("_core*.pyd"), None
        )
        if built is None:
            raise RuntimeError("CMake did not produce the _core extension")
        dest = pathlib.Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        self.copy_file(str(built), str(dest))


setup(
    ext_modules=[CMakeExtension("xmdg._core")],
    cmdclass={"build_ext": CMakeBuild},
)
