"""Synthetic acquisitions: phantoms, coil sensitivities, masks and noisy data.

All randomness comes from numpy's PCG64 bit generator. Uniform doubles are
taken from ``Generator.random`` and Gaussians are produced with Box-Muller
on that stream (:func:`gaussian`), so a given seed yields the same bits on
every platform.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DimensionError, SamplingMask, apply_mask, as_kept, fft2c, ifft2c


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(int(seed)))


def gaussian(rng, n):
    """``n`` standard normal draws via Box-Muller on ``rng.random``."""
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1], keeps log finite
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    t = 2.0 * np.pi * u2
    out = np.empty(2 * m)
    out[0::2] = r * np.cos(t)
    out[1::2] = r * np.sin(t)
    return out[:n]


def complex_gaussian(rng, shape, sigma=1.0):
    """Complex normal samples with per-component std ``sigma``.

    Consecutive Box-Muller outputs form the (real, imag) pair.
    """
    n = int(np.prod(shape))
    g = gaussian(rng, 2 * n)
    return sigma * (g[0::2] + 1j * g[1::2]).reshape(shape)


def derive_seed(*parts):
    """Stable 32-bit seed derived from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# --- phantoms ---------------------------------------------------------------

@dataclass
class Ellipse:
    center: tuple  # (y, x) in [-1, 1] grid coordinates
    axes: tuple  # (ay, ax) semi-axes in the same units
    angle: float = 0.0
    amplitude: complex = 1.0

    def __post_init__(self):
        if min(self.axes) <= 0:
            raise ValueError(f"ellipse semi-axes must be positive, got {self.axes}")


@dataclass
class PhantomSpec:
    shape: tuple
    ellipses: list
    phase_ramp: tuple = (0.0, 0.0, 0.0)  # (offset, d/dy, d/dx) in radians

    def __post_init__(self):
        if not self.ellipses:
            raise ValueError("phantom needs at least one ellipse")


def grid_coords(shape):
    """Pixel-center coordinates in [-1, 1), returned as (y, x) mesh."""
    h, w = shape
    y = (2.0 * (np.arange(h) + 0.5) / h) - 1.0
    x = (2.0 * (np.arange(w) + 0.5) / w) - 1.0
    return np.meshgrid(y, x, indexing="ij")


def inside_ellipse(e, y, x):
    c, s = math.cos(e.angle), math.sin(e.angle)
    dy, dx = y - e.center[0], x - e.center[1]
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (u / e.axes[1]) ** 2 + (v / e.axes[0]) ** 2 <= 1.0


def make_phantom(spec):
    """Rasterize ellipses at pixel centers (no anti-aliasing)."""
    y, x = grid_coords(spec.shape)
    img = np.zeros(spec.shape, dtype=np.complex128)
    for e in spec.ellipses:
        img[inside_ellipse(e, y, x)] += complex(e.amplitude)
    c0, cy, cx = spec.phase_ramp
    if c0 or cy or cx:
        img = img * np.exp(1j * (c0 + cy * y + cx * x))
    return img


# (amplitude, semi-axis x, semi-axis y, x0, y0, angle in degrees), modified Shepp-Logan
_SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0),
]


def shepp_logan_spec(shape, scale=0.9):
    # image rows grow downward, so y0 flips sign
    ellipses = [
        Ellipse((-y0 * scale, x0 * scale), (by * scale, ax * scale), math.radians(ang), amp)
        for amp, ax, by, x0, y0, ang in _SHEPP_LOGAN
    ]
    return PhantomSpec(tuple(shape), ellipses)


def random_phantom_spec(shape, seed):
    """Shepp-Logan variant with jittered geometry, contrast, extra blobs and phase."""
    rng = make_rng(seed)
    base = shepp_logan_spec(shape, scale=0.8 + 0.12 * rng.random())
    ellipses = []
    for k, e in enumerate(base.ellipses):
        jit = 0.04 if k > 1 else 0.015
        cy = e.center[0] + jit * (2 * rng.random() - 1)
        cx = e.center[1] + jit * (2 * rng.random() - 1)
        ay = e.axes[0] * (0.85 + 0.3 * rng.random())
        ax = e.axes[1] * (0.85 + 0.3 * rng.random())
        if k == 1:
            # keep the inner "skull" ellipse inside the outer one
            ay = min(ay, ellipses[0].axes[0] * 0.95)
            ax = min(ax, ellipses[0].axes[1] * 0.95)
        ang = e.angle + 0.15 * (2 * rng.random() - 1)
        amp = e.amplitude * (0.8 + 0.4 * rng.random()) if k > 1 else e.amplitude
        ellipses.append(Ellipse((cy, cx), (ay, ax), ang, amp))
    for _ in range(int(rng.integers(0, 4))):
        r = 0.4 * rng.random()
        t = 2 * np.pi * rng.random()
        size = 0.03 + 0.1 * rng.random()
        ellipses.append(Ellipse(
            (r * math.sin(t), r * math.cos(t)),
            (size, size * (0.5 + rng.random())),
            np.pi * rng.random(),
            0.3 * (2 * rng.random() - 1),
        ))
    ramp = (2 * np.pi * rng.random(), 0.5 * (2 * rng.random() - 1), 0.5 * (2 * rng.random() - 1))
    return PhantomSpec(tuple(shape), ellipses, ramp)


# --- coil sensitivities -----------------------------------------------------

@dataclass
class SensitivitySpec:
    coils: int
    support: tuple = (5, 5)
    seed: int = 0
    normalize: bool = False

    def __post_init__(self):
        if self.coils < 1:
            raise ValueError("need at least one coil")
        if any(f < 1 or f % 2 == 0 for f in self.support):
            raise ValueError(f"sensitivity support must be odd and >= 1, got {self.support}")


def kspace_window(shape, support):
    """Slices of the ``support`` window centered on DC."""
    (h, w), (f1, f2) = shape, support
    r0, c0 = h // 2 - f1 // 2, w // 2 - f2 // 2
    return slice(r0, r0 + f1), slice(c0, c0 + f2)


def make_sensitivities(spec, shape):
    """Random bandlimited coil maps, returned in the image domain ``(N, H, W)``.

    Fourier coefficients are complex Gaussian inside the centered window and
    zero outside. They are scaled so the mean of ``|s_i|^2`` is about 1.
    With ``normalize`` the maps are divided by their root sum of squares,
    which breaks the exact bandlimit.
    """
    h, w = shape
    f1, f2 = spec.support
    if f1 > h or f2 > w:
        raise DimensionError(f"support {spec.support} exceeds grid {shape}")
    rng = make_rng(spec.seed)
    coeffs = complex_gaussian(rng, (spec.coils, f1, f2), sigma=math.sqrt(0.5 * h * w / (f1 * f2)))
    khat = np.zeros((spec.coils, h, w), dtype=np.complex128)
    rs, cs = kspace_window(shape, spec.support)
    khat[:, rs, cs] = coeffs
    sens = ifft2c(khat)
    if spec.normalize:
        rss = np.sqrt(np.sum(np.abs(sens) ** 2, axis=0))
        sens = sens / rss
    return sens


# --- sampling masks ---------------------------------------------------------

@dataclass
class MaskSpec:
    acceleration: float
    sigma: float = 0.5
    seed: int = 0
    kind: str = "points"  # "points" | "lines"

    def __post_init__(self):
        if self.acceleration < 1:
            raise ValueError("acceleration must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.kind not in ("points", "lines"):
            raise ValueError(f"unknown mask kind {self.kind!r}")


def _density(n_or_shape, sigma):
    if isinstance(n_or_shape, int):
        k = (np.arange(n_or_shape) - n_or_shape // 2) / (n_or_shape / 2)
        r2 = k ** 2
    else:
        h, w = n_or_shape
        ky = (np.arange(h) - h // 2) / (h / 2)
        kx = (np.arange(w) - w // 2) / (w / 2)
        r2 = ky[:, None] ** 2 + kx[None, :] ** 2
    return np.exp(-r2 / (2 * sigma ** 2))


def _scale_to_count(p, target):
    """Probabilities ``min(1, c p)`` whose sum equals ``target`` (bisection on c)."""
    if target >= p.size:
        return np.ones_like(p)
    lo, hi = 0.0, 1.0
    while np.minimum(1.0, hi * p).sum() < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.minimum(1.0, mid * p).sum() < target:
            lo = mid
        else:
            hi = mid
    return np.minimum(1.0, hi * p)


def _draw(p, target, rng, tol=0.1):
    keep = rng.random(p.size).reshape(p.shape) < p
    n = int(keep.sum())
    if n > 0 and abs(p.size / n - p.size / target) <= tol * p.size / target:
        return keep, False
    # Bernoulli draw missed the acceleration band: keep the most probable locations
    order = np.argsort(-p.ravel(), kind="stable")[: int(round(target))]
    keep = np.zeros(p.size, dtype=bool)
    keep[order] = True
    return keep.reshape(p.shape), True


def make_mask(spec, shape):
    """Variable-density Cartesian mask with Gaussian keep probability.

    No calibration region is forced. ``fallback`` on the result records a
    deterministic top-k selection when the Bernoulli draw missed the target
    acceleration by more than 10%.
    """
    h, w = shape
    if spec.acceleration > h * w:
        raise ValueError(f"acceleration {spec.acceleration} exceeds grid size {h * w}")
    rng = make_rng(spec.seed)
    if spec.kind == "points":
        p = _scale_to_count(_density((h, w), spec.sigma), h * w / spec.acceleration)
        keep, fb = _draw(p, h * w / spec.acceleration, rng)
    else:
        # full readout lines along axis 1, variable density over phase encodes
        p = _scale_to_count(_density(h, spec.sigma), h / spec.acceleration)
        rows, fb = _draw(p, h / spec.acceleration, rng)
        keep = np.repeat(rows[:, None], w, axis=1)
    return SamplingMask(keep, fallback=fb)


# --- acquisition ------------------------------------------------------------

@dataclass
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be >= 0")


def coil_kspace(image, sens):
    """Fully sampled multi-coil k-space ``fft2c(rho * s_i)``."""
    image = np.asarray(image)
    sens = np.asarray(sens)
    if sens.ndim != 3 or sens.shape[1:] != image.shape:
        raise DimensionError(f"image {image.shape} and sensitivities {sens.shape} disagree")
    return fft2c(image[None] * sens)


def acquire(image, sens, mask, noise=None):
    """Undersampled noisy measurements ``b_i = A(fft2c(rho s_i)) + n_i``.

    Noise is drawn only at kept locations, in coil-major then row-major
    order over the kept entries.
    """
    noise = noise or NoiseSpec()
    kept = as_kept(mask)
    full = coil_kspace(image, sens)
    b = apply_mask(full, kept)
    if noise.sigma > 0:
        n_coils = full.shape[0]
        draws = complex_gaussian(make_rng(noise.seed), (n_coils, int(kept.sum())), noise.sigma)
        b[:, kept] += draws
    return b
