"""Pure-numpy versions of the hot convolution and pooling kernels.

Every function here has a twin in ``_ckernels.pyx``.  Both produce
bit-identical results: the compiled col2im accumulates the nine kernel taps
in the same (row, col) order as the slice additions below.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col3x3(x):
    """Unfold an (N, C, H, W) array into (N, H, W, C, 3, 3) patches, zero padded by 1."""
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))


def col2im3x3(dcols, H, W):
    """Adjoint of :func:`im2col3x3`: fold patch gradients back to (N, C, H, W)."""
    N, _, _, C = dcols.shape[:4]
    dxp = np.zeros((N, C, H + 2, W + 2), dtype=dcols.dtype)
    for ki in range(3):
        for kj in range(3):
            dxp[:, :, ki:ki + H, kj:kj + W] += dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(dxp[:, :, 1:H + 1, 1:W + 1])


def maxpool2_forward(x):
    """2x2/stride-2 max pool. Returns (out, argmax) with argmax in 0..3 (row-major, first max wins)."""
    N, C, H, W = x.shape
    win = x.reshape(N, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, H // 2, W // 2, 4)
    idx = np.argmax(win, axis=-1).astype(np.int8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2_backward(dout, idx):
    N, C, Ho, Wo = dout.shape
    dwin = np.zeros((N, C, Ho, Wo, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None].astype(np.intp), dout[..., None], axis=-1)
    dx = dwin.reshape(N, C, Ho, Wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, Ho * 2, Wo * 2)
    return np.ascontiguousarray(dx)
