"""Backend selection for the patch-extraction kernels.

The compiled extension is used when it imports; setting
``CALIBLESS_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("CALIBLESS_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"
_impl = _ckernels if _ckernels is not None else _pykernels


def hankel_lift(x, f1, f2):
    return _impl.hankel_lift(np.ascontiguousarray(x, dtype=np.complex128), f1, f2)


def hankel_lift_adjoint(y, n, h, w, f1, f2):
    return _impl.hankel_lift_adjoint(
        np.ascontiguousarray(y, dtype=np.complex128), n, h, w, f1, f2)


def im2col(x, k):
    return _impl.im2col(np.ascontiguousarray(x), k)


def col2im(cols, c, b, h, w, k):
    return _impl.col2im(np.ascontiguousarray(cols), c, b, h, w, k)


def backends():
    """Available kernel modules keyed by name (used by the benchmark)."""
    out = {"python": _pykernels}
    if _ckernels is not None:
        out["cython"] = _ckernels
    return out
