"""End-to-end training of the unrolled networks with Adam."""

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import net
from .sim import derive_seed, make_rng

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Raised when the loss becomes non-finite."""


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 4
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss: str = "kspace"  # "kspace" | "image"
    val_split: float = 0.1
    width: int = 16
    unrolls: int = 5
    kernel_size: int = 3
    beta_init: float = 1.0
    train_beta: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam moment coefficients must lie in [0, 1)")
        if self.loss not in net.LOSSES:
            raise ValueError(f"unknown loss domain {self.loss!r}")
        if not 0 <= self.val_split < 1:
            raise ValueError("val_split must lie in [0, 1)")
        if self.width < 1 or self.unrolls < 1:
            raise ValueError("width and unrolls must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        if self.beta_init <= 0:
            raise ValueError("beta_init must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


class Adam:
    """Adaptive-moment update over a dict of arrays."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        out = {}
        for name, value in params.items():
            g = grads[name]
            m = self.m.get(name, 0.0) * self.beta1 + (1 - self.beta1) * g
            v = self.v.get(name, 0.0) * self.beta2 + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            upd = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            out[name] = (value - upd).astype(value.dtype)
        return out


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    seconds: list = field(default_factory=list)  # wall-clock per epoch, kept out of `epochs`

    def to_dict(self):
        return {"epochs": list(self.epochs), "seconds": list(self.seconds)}


def split_indices(n, val_split):
    """Leading samples train, trailing ``val_split`` fraction validates."""
    n_val = int(round(n * val_split))
    if n_val >= n:
        n_val = n - 1
    return np.arange(n - n_val), np.arange(n - n_val, n)


def evaluate_loss(data, p, loss_fn, batch_size):
    total, count = 0.0, 0
    for s in range(0, len(data), batch_size):
        sl = slice(s, s + batch_size)
        out = net.forward(data.b[sl], data.mask[sl], p)
        val, _ = loss_fn(out, data.kspace[sl])
        k = data.b[sl].shape[0]
        total += val * k
        count += k
    return total / max(count, 1)


def train(data, cfg, arch="kspace", val_data=None, params=None):
    """Fit an unrolled network to fully sampled targets.

    Parameters
    ----------
    data : Dataset
        Training samples (measurements, masks, ground-truth k-space). When
        ``val_data`` is None the trailing ``cfg.val_split`` fraction of
        ``data`` is held out for validation.
    arch : {"kspace", "hybrid"}
    params : NetParams, optional
        Starting point; a fresh seeded initialization otherwise.

    Returns
    -------
    (NetParams, TrainLog)
    """
    if arch not in ("kspace", "hybrid"):
        raise ValueError(f"unknown architecture {arch!r}")
    if val_data is None:
        tr_idx, va_idx = split_indices(len(data), cfg.val_split)
        val_data = data.subset(va_idx) if len(va_idx) else None
        data = data.subset(tr_idx)
    coils = data.b.shape[1]
    if params is None:
        params = net.init_net(coils, cfg.width, cfg.unrolls, arch == "hybrid", cfg.kernel_size,
                              derive_seed(cfg.seed, 1), cfg.beta_init, cfg.train_beta)
        if cfg.dtype == "float32":
            params.update({k: v.astype(np.float32) for k, v in params.named_arrays().items()
                           if v.ndim})
    loss_fn = net.LOSSES[cfg.loss]
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    tlog = TrainLog()
    n = len(data)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = make_rng(derive_seed(cfg.seed, 2, epoch)).permutation(n)
        running, seen = 0.0, 0
        for bi, s in enumerate(range(0, n, cfg.batch_size)):
            idx = np.sort(order[s:s + cfg.batch_size])
            cache = net.ForwardCache(None, None)
            out = net.forward(data.b[idx], data.mask[idx], params, cache)
            val, g = loss_fn(out, data.kspace[idx])
            if not math.isfinite(val):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bi}")
            grads = net.backward(g, cache, params)
            if cfg.lr > 0:
                params.update(opt.step(params.named_arrays(), grads))
            running += val * len(idx)
            seen += len(idx)
        entry = {"epoch": epoch, "train_loss": running / seen, "beta_k": params.beta_k}
        if params.hybrid:
            entry["beta_i"] = params.beta_i
        if val_data is not None:
            entry["val_loss"] = evaluate_loss(val_data, params, loss_fn, cfg.batch_size)
        tlog.epochs.append(entry)
        tlog.seconds.append(time.perf_counter() - t0)
        log.info("epoch %d train %.4e val %s (%.1fs)", epoch, entry["train_loss"],
                 entry.get("val_loss"), tlog.seconds[-1])
    return params, tlog
