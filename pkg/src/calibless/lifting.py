"""Block Hankel lifting of multi-coil k-space and the filterbank operator.

``lift`` builds T(x) = [H(x_1) ... H(x_N)] whose product with a stacked
filter is a sum of valid 2D linear convolutions. ``filterbank_apply`` is
the same product seen from the other side: x -> T(x) S, i.e. the data
convolved with every column of S. Columns of S are ordered coil-major and
then row-major over the ``f1 x f2`` taps.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal

from . import kernels
from .core import DimensionError, check_multichannel


@dataclass(frozen=True)
class LiftConfig:
    coils: int
    shape: tuple
    filter_size: tuple = (7, 7)

    def __post_init__(self):
        f1, f2 = self.filter_size
        h, w = self.shape
        if self.coils < 1:
            raise ValueError("coils must be >= 1")
        if not (1 <= f1 <= h and 1 <= f2 <= w):
            raise DimensionError(f"filter {self.filter_size} does not fit grid {self.shape}")

    @property
    def out_shape(self):
        """Shape of the valid convolution region."""
        return (self.shape[0] - self.filter_size[0] + 1, self.shape[1] - self.filter_size[1] + 1)

    @property
    def rows(self):
        m1, m2 = self.out_shape
        return m1 * m2

    @property
    def taps(self):
        return self.filter_size[0] * self.filter_size[1]

    @property
    def cols(self):
        return self.coils * self.taps

    @classmethod
    def for_data(cls, x, filter_size=(7, 7)):
        x = check_multichannel(x)
        return cls(x.shape[0], tuple(x.shape[1:]), tuple(filter_size))

    def check(self, x):
        x = check_multichannel(x)
        if x.shape != (self.coils, *self.shape):
            raise DimensionError(
                f"data shape {x.shape} does not match lift config "
                f"({self.coils}, {self.shape[0]}, {self.shape[1]})")
        return x


@dataclass
class FilterBank:
    """Matrix S whose columns are stacked multi-coil k-space filters."""

    config: LiftConfig
    columns: np.ndarray  # (coils * f1 * f2, R)

    def __post_init__(self):
        self.columns = np.asarray(self.columns, dtype=np.complex128)
        if self.columns.ndim != 2 or self.columns.shape[0] != self.config.cols:
            raise DimensionError(
                f"filterbank columns must have {self.config.cols} rows, got {self.columns.shape}")

    @property
    def n_filters(self):
        return self.columns.shape[1]

    def filters(self):
        """Columns reshaped to ``(R, coils, f1, f2)``."""
        f1, f2 = self.config.filter_size
        return self.columns.T.reshape(self.n_filters, self.config.coils, f1, f2)


def lift(x, cfg):
    """Dense block Hankel matrix, shape ``(rows, coils * f1 * f2)``."""
    x = cfg.check(x)
    f1, f2 = cfg.filter_size
    return kernels.hankel_lift(x, f1, f2)


def lift_adjoint(y, cfg):
    """Adjoint of :func:`lift`: scatter-add each row's patch back to the grid."""
    y = np.asarray(y)
    if y.shape != (cfg.rows, cfg.cols):
        raise DimensionError(f"expected matrix of shape {(cfg.rows, cfg.cols)}, got {y.shape}")
    f1, f2 = cfg.filter_size
    return kernels.hankel_lift_adjoint(y, cfg.coils, cfg.shape[0], cfg.shape[1], f1, f2)


def gram(x, cfg):
    """T(x)^H T(x), Hermitian PSD, shape ``(coils*f1*f2,) * 2``."""
    t = lift(x, cfg)
    g = t.conj().T @ t
    return 0.5 * (g + g.conj().T)


def lift_matvec(x, v, cfg):
    """T(x) v computed as a sum of valid convolutions (no dense matrix)."""
    x = cfg.check(x)
    f1, f2 = cfg.filter_size
    v = np.asarray(v).reshape(cfg.coils, f1, f2)
    out = np.zeros(cfg.out_shape, dtype=np.complex128)
    for i in range(cfg.coils):
        out += signal.convolve2d(x[i], v[i], mode="valid")
    return out.ravel()


def lift_rmatvec(x, u, cfg):
    """T(x)^H u computed by correlation (no dense matrix)."""
    x = cfg.check(x)
    u = np.asarray(u).reshape(cfg.out_shape)
    # tap (p, q) of coil i pairs with x[i, a+f1-1-p, b+f2-1-q]
    blocks = [signal.convolve2d(x[i].conj(), u[::-1, ::-1], mode="valid")[::-1, ::-1]
              for i in range(cfg.coils)]
    return np.concatenate([b.ravel() for b in blocks])


def gram_matvec(x, v, cfg):
    """Implicit Gram product T(x)^H T(x) v."""
    return lift_rmatvec(x, lift_matvec(x, v, cfg), cfg)


def filterbank_apply(bank, x):
    """Convolve the multi-coil data with every filter: ``(R, m1, m2)`` output.

    Channel ``r`` is ``sum_i conv_valid(x_i, s_i^(r))``.
    """
    cfg = bank.config
    y = lift(x, cfg) @ bank.columns
    return np.ascontiguousarray(y.T).reshape(bank.n_filters, *cfg.out_shape)


def filterbank_adjoint(bank, y):
    """Adjoint of :func:`filterbank_apply` (correlation with conjugate filters)."""
    cfg = bank.config
    y = np.asarray(y)
    if y.shape != (bank.n_filters, *cfg.out_shape):
        raise DimensionError(
            f"expected filter responses of shape {(bank.n_filters, *cfg.out_shape)}, got {y.shape}")
    ymat = y.reshape(bank.n_filters, cfg.rows).T
    return lift_adjoint(ymat @ bank.columns.conj().T, cfg)


def filterbank_matrix(bank):
    """Dense G(S): maps ``vec(x)`` (coil, row, col order) to ``vec(filterbank_apply)``.

    Built column by column from unit inputs; meant for small test grids.
    """
    cfg = bank.config
    n = cfg.coils * cfg.shape[0] * cfg.shape[1]
    cols = []
    for j in range(n):
        e = np.zeros(n, dtype=np.complex128)
        e[j] = 1.0
        cols.append(filterbank_apply(bank, e.reshape(cfg.coils, *cfg.shape)).ravel())
    return np.stack(cols, axis=1)
