"""Two-way texture/vibration cross-modal generation toolkit."""

import os
import sys

# The extension links against libtorch; importing torch first makes its
# shared libraries resolvable without rpath gymnastics.
import torch  # noqa: F401

_ext_dir = os.environ.get("XMDG_EXT_DIR")
if _ext_dir:
    # In-tree test runs point at the CMake build directory.
    if _ext_dir not in sys.path:
        sys.path.insert(0, _ext_dir)
    from _core import *  # noqa: F401,F403
    from _core import __doc__  # noqa: F401
else:
    from xmdg._core import *  # noqa: F401,F403
    from xmdg._core import __doc__  # noqa: F401

__version__ = "0.1.0"
