"""Seeded multi-sample simulation used by the CLI, trainer and benchmarks."""

from dataclasses import asdict, dataclass

import numpy as np

from . import sim
from .core import apply_mask


@dataclass
class SimConfig:
    shape: tuple = (64, 64)
    coils: int = 4
    count: int = 1
    seed: int = 0
    phantom: str = "random"  # "random" | "shepp_logan"
    sens_support: tuple = (5, 5)
    normalize_sens: bool = False
    acceleration: float = 2.0
    mask_sigma: float = 0.5
    mask_kind: str = "points"
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.sens_support = tuple(int(s) for s in self.sens_support)
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.phantom not in ("random", "shepp_logan"):
            raise ValueError(f"unknown phantom kind {self.phantom!r}")

    def to_dict(self):
        d = asdict(self)
        d["shape"] = list(self.shape)
        d["sens_support"] = list(self.sens_support)
        return d


@dataclass
class Dataset:
    image: np.ndarray  # (S, H, W) ground-truth object
    sens: np.ndarray  # (S, N, H, W)
    mask: np.ndarray  # (S, H, W) bool
    kspace: np.ndarray  # (S, N, H, W) fully sampled coil k-space
    b: np.ndarray  # (S, N, H, W) measurements

    def __len__(self):
        return self.b.shape[0]

    def subset(self, idx):
        return Dataset(self.image[idx], self.sens[idx], self.mask[idx], self.kspace[idx], self.b[idx])


def sample_seeds(seed, i):
    """Per-sample seeds for (phantom, sensitivities, mask, noise)."""
    return tuple(sim.derive_seed(seed, i, k) for k in range(4))


def build_dataset(cfg):
    """Simulate ``cfg.count`` independent acquisitions.

    Each sample draws its phantom, coil maps, mask and noise from its own
    derived seed, so items can be generated in any order.
    """
    images, sens_all, masks, full_all, meas = [], [], [], [], []
    for i in range(cfg.count):
        s_ph, s_sens, s_mask, s_noise = sample_seeds(cfg.seed, i)
        if cfg.phantom == "random":
            spec = sim.random_phantom_spec(cfg.shape, s_ph)
        else:
            spec = sim.shepp_logan_spec(cfg.shape)
        img = sim.make_phantom(spec)
        sens = sim.make_sensitivities(
            sim.SensitivitySpec(cfg.coils, cfg.sens_support, s_sens, cfg.normalize_sens), cfg.shape)
        mask = sim.make_mask(
            sim.MaskSpec(cfg.acceleration, cfg.mask_sigma, s_mask, cfg.mask_kind), cfg.shape)
        full = sim.coil_kspace(img, sens)
        b = sim.acquire(img, sens, mask, sim.NoiseSpec(cfg.noise_sigma, s_noise))
        images.append(img)
        sens_all.append(sens)
        masks.append(mask.kept)
        full_all.append(full)
        meas.append(b)
    return Dataset(np.stack(images), np.stack(sens_all), np.stack(masks),
                   np.stack(full_all), np.stack(meas))


def zero_filled(b, mask):
    return apply_mask(b, mask)
