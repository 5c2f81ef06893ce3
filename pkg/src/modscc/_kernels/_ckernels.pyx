# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution and pooling kernels (see ``_fallback`` for the reference)."""
import numpy as np

ctypedef fused floating_t:
    float
    double


def im2col3x3(const floating_t[:, :, :, ::1] x):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t n, c, i, j, ki, kj, si, sj
    dtype = np.float32 if floating_t is float else np.float64
    out = np.zeros((N, H, W, C, 3, 3), dtype=dtype)
    cdef floating_t[:, :, :, :, :, ::1] o = out
    with nogil:
        for n in range(N):
            for i in range(H):
                for j in range(W):
                    for c in range(C):
                        for ki in range(3):
                            si = i + ki - 1
                            if si < 0 or si >= H:
                                continue
                            for kj in range(3):
                                sj = j + kj - 1
                                if sj < 0 or sj >= W:
                                    continue
                                o[n, i, j, c, ki, kj] = x[n, c, si, sj]
    return out


def col2im3x3(const floating_t[:, :, :, :, :, ::1] dcols, Py_ssize_t H, Py_ssize_t W):
    cdef Py_ssize_t N = dcols.shape[0], C = dcols.shape[3]
    cdef Py_ssize_t n, c, i, j, ki, kj, si, sj
    dtype = np.float32 if floating_t is float else np.float64
    dx = np.zeros((N, C, H, W), dtype=dtype)
    cdef floating_t[:, :, :, ::1] d = dx
    with nogil:
        # tap-major order matches the slice additions of the numpy path
        for ki in range(3):
            for kj in range(3):
                for n in range(N):
                    for c in range(C):
                        for i in range(H):
                            si = i + ki - 1
                            if si < 0 or si >= H:
                                continue
                            for j in range(W):
                                sj = j + kj - 1
                                if sj < 0 or sj >= W:
                                    continue
                                d[n, c, si, sj] += dcols[n, i, j, c, ki, kj]
    return dx


def maxpool2_forward(const floating_t[:, :, :, ::1] x):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], Ho = x.shape[2] // 2, Wo = x.shape[3] // 2
    cdef Py_ssize_t n, c, i, j, k
    cdef floating_t best, v
    cdef signed char arg
    dtype = np.float32 if floating_t is float else np.float64
    out = np.empty((N, C, Ho, Wo), dtype=dtype)
    idx = np.empty((N, C, Ho, Wo), dtype=np.int8)
    cdef floating_t[:, :, :, ::1] o = out
    cdef signed char[:, :, :, ::1] a = idx
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        best = x[n, c, 2 * i, 2 * j]
                        arg = 0
                        for k in range(1, 4):
                            v = x[n, c, 2 * i + k // 2, 2 * j + k % 2]
                            if v > best:
                                best = v
                                arg = <signed char>k
                        o[n, c, i, j] = best
                        a[n, c, i, j] = arg
    return out, idx


def maxpool2_backward(const floating_t[:, :, :, ::1] dout, const signed char[:, :, :, ::1] idx):
    cdef Py_ssize_t N = dout.shape[0], C = dout.shape[1], Ho = dout.shape[2], Wo = dout.shape[3]
    cdef Py_ssize_t n, c, i, j, k
    dtype = np.float32 if floating_t is float else np.float64
    dx = np.zeros((N, C, 2 * Ho, 2 * Wo), dtype=dtype)
    cdef floating_t[:, :, :, ::1] d = dx
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        k = idx[n, c, i, j]
                        d[n, c, 2 * i + k // 2, 2 * j + k % 2] = dout[n, c, i, j]
    return dx
