"""Hot kernels for conv/pool, compiled when available.

The Cython extension is preferred; the numpy fallback is used when it is not
built or when ``MODSCC_PURE_PYTHON=1`` is set before import.
"""
import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("MODSCC_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback


def im2col3x3(x):
    return _impl.im2col3x3(np.ascontiguousarray(x))


def col2im3x3(dcols, H, W):
    return _impl.col2im3x3(np.ascontiguousarray(dcols), H, W)


def maxpool2_forward(x):
    return _impl.maxpool2_forward(np.ascontiguousarray(x))


def maxpool2_backward(dout, idx):
    return _impl.maxpool2_backward(np.ascontiguousarray(dout), np.ascontiguousarray(idx))
