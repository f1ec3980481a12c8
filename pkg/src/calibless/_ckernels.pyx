# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled patch-extraction kernels (same contracts as ``_pykernels``)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef fused real_t:
    float
    double


def hankel_lift(const double complex[:, :, ::1] x, Py_ssize_t f1, Py_ssize_t f2):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t m1 = h - f1 + 1, m2 = w - f2 + 1
    cdef Py_ssize_t ncols = n * f1 * f2
    out = np.empty((m1 * m2, ncols), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    cdef Py_ssize_t a, b, i, p, q, row, col
    with nogil:
        for a in range(m1):
            for b in range(m2):
                row = a * m2 + b
                col = 0
                for i in range(n):
                    for p in range(f1):
                        for q in range(f2):
                            o[row, col] = x[i, a + f1 - 1 - p, b + f2 - 1 - q]
                            col = col + 1
    return out


def hankel_lift_adjoint(const double complex[:, ::1] y, Py_ssize_t n, Py_ssize_t h,
                        Py_ssize_t w, Py_ssize_t f1, Py_ssize_t f2):
    cdef Py_ssize_t m1 = h - f1 + 1, m2 = w - f2 + 1
    out = np.zeros((n, h, w), dtype=np.complex128)
    cdef double complex[:, :, ::1] o = out
    cdef Py_ssize_t a, b, i, p, q, row, col
    with nogil:
        for a in range(m1):
            for b in range(m2):
                row = a * m2 + b
                col = 0
                for i in range(n):
                    for p in range(f1):
                        for q in range(f2):
                            o[i, a + f1 - 1 - p, b + f2 - 1 - q] += y[row, col]
                            col = col + 1
    return out


def im2col(const real_t[:, :, :, ::1] x, Py_ssize_t k):
    cdef Py_ssize_t c = x.shape[0], nb = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t pad = k // 2
    dtype = np.float32 if real_t is float else np.float64
    out = np.empty((c * k * k, nb * h * w), dtype=dtype)
    cdef real_t[:, ::1] o = out
    cdef Py_ssize_t ci, p, q, bi, yy, xx, sy, row, col, x0, x1
    cdef real_t* dst
    cdef const real_t* src
    with nogil:
        for ci in range(c):
            for p in range(k):
                for q in range(k):
                    row = (ci * k + p) * k + q
                    # output columns xx read source column xx + q - pad, valid on [x0, x1)
                    x0 = pad - q if q < pad else 0
                    x1 = w + pad - q if q > pad else w
                    for bi in range(nb):
                        for yy in range(h):
                            sy = yy + p - pad
                            dst = &o[row, (bi * h + yy) * w]
                            if sy < 0 or sy >= h:
                                for xx in range(w):
                                    dst[xx] = 0
                                continue
                            src = &x[ci, bi, sy, 0]
                            for xx in range(x0):
                                dst[xx] = 0
                            for xx in range(x0, x1):
                                dst[xx] = src[xx + q - pad]
                            for xx in range(x1, w):
                                dst[xx] = 0
    return out


def col2im(const real_t[:, ::1] cols, Py_ssize_t c, Py_ssize_t nb, Py_ssize_t h,
           Py_ssize_t w, Py_ssize_t k):
    cdef Py_ssize_t pad = k // 2
    dtype = np.float32 if real_t is float else np.float64
    out = np.zeros((c, nb, h, w), dtype=dtype)
    cdef real_t[:, :, :, ::1] o = out
    cdef Py_ssize_t ci, p, q, bi, yy, xx, sy, row, x0, x1
    cdef real_t* dst
    cdef const real_t* src
    with nogil:
        for ci in range(c):
            for p in range(k):
                for q in range(k):
                    row = (ci * k + p) * k + q
                    x0 = pad - q if q < pad else 0
                    x1 = w + pad - q if q > pad else w
                    for bi in range(nb):
                        for yy in range(h):
                            sy = yy + p - pad
                            if sy < 0 or sy >= h:
                                continue
                            src = &cols[row, (bi * h + yy) * w]
                            dst = &o[ci, bi, sy, 0]
                            for xx in range(x0, x1):
                                dst[xx + q - pad] += src[xx]
    return out
