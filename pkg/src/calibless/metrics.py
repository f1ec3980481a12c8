"""Coil combination and SNR."""

import numpy as np

from .core import DimensionError, ifft2c

SNR_CLAMP_DB = 300.0


def sos_combine(x):
    """Root sum of squares over the coil axis (axis ``-3``)."""
    x = np.asarray(x)
    return np.sqrt(np.sum(np.abs(x) ** 2, axis=-3))


def sos_image(kspace):
    """SOS magnitude image of multi-coil k-space."""
    return sos_combine(ifft2c(kspace))


def snr_db(ref, rec):
    """``20 log10(||ref|| / ||ref - rec||)``, clamped at +300 dB for an exact match."""
    ref = np.asarray(ref)
    rec = np.asarray(rec)
    if ref.shape != rec.shape:
        raise DimensionError(f"reference {ref.shape} and reconstruction {rec.shape} disagree")
    ref_norm = np.linalg.norm(ref)
    if ref_norm == 0:
        raise ValueError("reference image has zero norm")
    err = np.linalg.norm(ref - rec)
    if err == 0:
        return SNR_CLAMP_DB
    return float(min(SNR_CLAMP_DB, 20.0 * np.log10(ref_norm / err)))


def kspace_snr_db(ref_kspace, rec_kspace):
    """SNR between SOS images of two multi-coil k-space arrays."""
    return snr_db(sos_image(ref_kspace), sos_image(rec_kspace))
