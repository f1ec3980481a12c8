"""Pure numpy implementations of the patch-extraction kernels.

These are the reference path and the fallback when the compiled
``_ckernels`` extension is not available.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def hankel_lift(x, f1, f2):
    """Block Hankel lifting of a ``(N, H, W)`` complex stack.

    Row ``(a, b)`` of coil block ``i`` holds the flipped patch
    ``x[i, a+f1-1-p, b+f2-1-q]`` at column ``(p, q)``.
    """
    n, h, w = x.shape
    m1, m2 = h - f1 + 1, w - f2 + 1
    win = sliding_window_view(x, (f1, f2), axis=(1, 2))  # (N, m1, m2, f1, f2)
    win = win[..., ::-1, ::-1]
    out = np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4))
    return out.reshape(m1 * m2, n * f1 * f2)


def hankel_lift_adjoint(y, n, h, w, f1, f2):
    m1, m2 = h - f1 + 1, w - f2 + 1
    blocks = y.reshape(m1, m2, n, f1, f2)
    out = np.zeros((n, h, w), dtype=np.result_type(y.dtype, np.complex128))
    for p in range(f1):
        r0 = f1 - 1 - p
        for q in range(f2):
            c0 = f2 - 1 - q
            out[:, r0:r0 + m1, c0:c0 + m2] += blocks[:, :, :, p, q].transpose(2, 0, 1)
    return out


def im2col(x, k):
    """Zero-padded ``k x k`` patches of a ``(C, B, H, W)`` real array.

    Returns ``(C*k*k, B*H*W)`` with rows ordered ``(c, p, q)``.
    """
    c, b, h, w = x.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((c, k, k, b, h, w), dtype=x.dtype)
    for p in range(k):
        for q in range(k):
            cols[:, p, q] = xp[:, :, p:p + h, q:q + w]
    return cols.reshape(c * k * k, b * h * w)


def col2im(cols, c, b, h, w, k):
    pad = k // 2
    cols = cols.reshape(c, k, k, b, h, w)
    xp = np.zeros((c, b, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for p in range(k):
        for q in range(k):
            xp[:, :, p:p + h, q:q + w] += cols[:, p, q]
    return xp[:, :, pad:pad + h, pad:pad + w].copy()
