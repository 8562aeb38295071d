"""Kernel backend selection.

The compiled Cython extension is preferred; set MVG_KERNELS=python to force
the numpy fallback (used by the benchmark and the parity tests).
"""

import os

from . import pure

if os.environ.get("MVG_KERNELS", "").lower() in ("python", "pure", "py"):
    _impl = pure
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND

lstm_cell_forward = _impl.lstm_cell_forward
lstm_cell_backward = _impl.lstm_cell_backward
levenshtein = _impl.levenshtein
tree_edit_distance = _impl.tree_edit_distance


def compiled_available():
    try:
        from . import _ckernels  # noqa: F401
        return True
    except ImportError:
        return False
