"""Calibrationless parallel MRI reconstruction.

Structured low-rank IRLS recovery (``pslr``) and its pre-learned unrolled
replacements (``net``), with the simulator, trainer and benchmark harness
used to exercise them.
"""

from .core import SamplingMask, apply_mask, fft2c, ifft2c
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "SamplingMask", "apply_mask", "fft2c", "ifft2c"]
