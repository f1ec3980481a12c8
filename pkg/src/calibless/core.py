"""Centered orthonormal FFTs and the Cartesian sampling operator.

Grids are plain numpy arrays: a single complex grid is ``(H, W)`` and a
multi-coil grid is ``(N, H, W)`` (coil axis first). Any leading axes are
treated as batch axes by the transforms.
"""

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes disagree with an operator's configuration."""


class NumericalError(ArithmeticError):
    """Raised when a solver produces non-finite values or an eigensolver fails."""


def fft2c(x):
    """Centered, orthonormal 2D DFT over the last two axes.

    DC sits at index ``(H // 2, W // 2)``.
    """
    x = np.asarray(x)
    axes = (-2, -1)
    y = np.fft.ifftshift(x, axes=axes)
    y = np.fft.fft2(y, axes=axes, norm="ortho")
    return np.fft.fftshift(y, axes=axes)


def ifft2c(x):
    """Inverse of :func:`fft2c`."""
    x = np.asarray(x)
    axes = (-2, -1)
    y = np.fft.ifftshift(x, axes=axes)
    y = np.fft.ifft2(y, axes=axes, norm="ortho")
    return np.fft.fftshift(y, axes=axes)


@dataclass
class SamplingMask:
    """Boolean k-space sampling pattern (the operator A).

    Attributes
    ----------
    kept : ndarray of bool, shape (H, W)
        True where k-space is acquired.
    fallback : bool
        Set when the generator had to fall back to a deterministic top-k
        selection instead of Bernoulli draws.
    """

    kept: np.ndarray
    fallback: bool = field(default=False)

    def __post_init__(self):
        self.kept = np.asarray(self.kept, dtype=bool)
        if self.kept.ndim != 2:
            raise DimensionError(f"mask must be 2D, got shape {self.kept.shape}")
        if not self.kept.any():
            raise ValueError("mask keeps no k-space locations")

    @property
    def shape(self):
        return self.kept.shape

    @property
    def n_kept(self):
        return int(self.kept.sum())

    @property
    def acceleration(self):
        return self.kept.size / self.n_kept


def as_kept(mask):
    """Boolean array behind either a :class:`SamplingMask` or a plain array."""
    if isinstance(mask, SamplingMask):
        return mask.kept
    return np.asarray(mask, dtype=bool)


def apply_mask(x, mask):
    """Keep acquired k-space locations and zero the rest.

    Acts identically on every coil. As a map on zero-filled grids this is an
    orthogonal projection, hence self-adjoint: it serves as both A and A^H.
    """
    x = np.asarray(x)
    kept = as_kept(mask)
    if x.shape[-2:] != kept.shape:
        raise DimensionError(f"mask shape {kept.shape} does not match grid {x.shape[-2:]}")
    return np.where(kept, x, 0).astype(np.result_type(x.dtype, np.complex128))


def check_multichannel(x, name="x"):
    x = np.asarray(x)
    if x.ndim != 3:
        raise DimensionError(f"{name} must be (coils, H, W), got shape {x.shape}")
    return x
