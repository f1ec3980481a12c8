"""Self-learned structured low-rank recovery by iteratively reweighted least squares.

Each outer iteration re-estimates the filterbank S = (G + eps I)^(-1/4) from
the current k-space iterate, applies the residual linear denoiser
``x - (lam/beta) G(S)^H G(S) x`` and then enforces data consistency in
closed form.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import DimensionError, NumericalError, apply_mask, as_kept, check_multichannel
from .lifting import FilterBank, LiftConfig, filterbank_adjoint, filterbank_apply, gram, lift

log = logging.getLogger(__name__)


@dataclass
class PslrConfig:
    """Solver settings.

    ``lam`` and ``beta`` default to values derived from the data scale when
    left as ``None`` (see :func:`resolve_weights`). ``eps0`` defaults to
    ``eps_scale`` times the largest eigenvalue of the initial Gram matrix.
    """

    filter_size: tuple = (7, 7)
    lam: float = None
    beta: float = None
    lam_over_beta: float = 1e-2
    noise_sigma: float = 0.0
    eps0: float = None
    eps_scale: float = 1e-2
    eps_decay: float = 0.5
    eps_min_ratio: float = 1e-9
    iterations: int = 30
    tol: float = 0.0
    track_cost: bool = True

    def __post_init__(self):
        if self.lam is not None and self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0 < self.eps_decay <= 1:
            raise ValueError("eps_decay must lie in (0, 1]")
        if self.eps0 is not None and self.eps0 <= 0:
            raise ValueError("eps0 must be positive")
        if not 0 < self.eps_min_ratio <= 1:
            raise ValueError("eps_min_ratio must lie in (0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.lam_over_beta <= 0:
            raise ValueError("lam_over_beta must be positive")


@dataclass
class PslrTrace:
    eps: list = field(default_factory=list)
    cost: list = field(default_factory=list)  # (total, data, nuclear) per iteration
    rel_change: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    lam: float = 0.0
    beta: float = 0.0
    stopped_early: bool = False

    def to_dict(self):
        return {
            "eps": list(self.eps),
            "cost": [list(c) for c in self.cost],
            "rel_change": list(self.rel_change),
            "seconds": list(self.seconds),
            "lam": self.lam,
            "beta": self.beta,
            "stopped_early": self.stopped_early,
        }


def nullspace_update(x, eps, cfg):
    """Filterbank ``S = V (L + eps)^(-1/4) V^H`` from the eigendecomposition of the Gram matrix."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = gram(x, cfg)
    return weights_from_gram(g, eps, cfg)


def weights_from_gram(g, eps, cfg):
    if not np.all(np.isfinite(g)):
        raise NumericalError("Gram matrix has non-finite entries (overflow in the iterate?)")
    try:
        evals, evecs = linalg.eigh(g)
    except linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed (gram norm {np.linalg.norm(g):.3e}, eps {eps:.3e})") from exc
    # clip rounding-level negatives only when they would flip the shift
    evals = np.where(evals + eps > 0, evals, 0.0)
    w = (evals + eps) ** -0.25
    return FilterBank(cfg, (evecs * w) @ evecs.conj().T)


def irls_cost(x, b, mask, lam, cfg):
    """Objective ``||A x - b||^2 + lam ||T(x)||_*``, returned as (total, data, nuclear)."""
    x = check_multichannel(x)
    b = check_multichannel(b, "b")
    if x.shape != b.shape:
        raise DimensionError(f"iterate {x.shape} and data {b.shape} disagree")
    data = float(np.sum(np.abs(apply_mask(x, mask) - b) ** 2))
    sv = linalg.svd(lift(x, cfg), compute_uv=False)
    nuclear = float(np.sum(sv))
    return data + lam * nuclear, data, nuclear


def dc_solve(z, b, mask, beta):
    """Closed-form minimizer of ``||A x - b||^2 + beta ||x - z||^2``.

    Kept locations get ``(b + beta z) / (1 + beta)``; the rest copy ``z``.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    kept = as_kept(mask)
    z = np.asarray(z)
    b = np.asarray(b)
    if z.shape != b.shape or z.shape[-2:] != kept.shape[-2:]:
        raise DimensionError(f"shapes disagree: z {z.shape}, b {b.shape}, mask {kept.shape}")
    return np.where(kept, (b + beta * z) / (1.0 + beta), z)


def linear_denoise(x, bank, lam_over_beta):
    """Residual conv-deconv block ``x - (lam/beta) G(S)^H G(S) x``."""
    if lam_over_beta < 0:
        raise ValueError("lam_over_beta must be >= 0")
    if lam_over_beta == 0:
        return np.array(x, dtype=np.complex128)
    return x - lam_over_beta * filterbank_adjoint(bank, filterbank_apply(bank, x))


def resolve_weights(b, cfg):
    """(lam, beta) for a data set, honoring explicit values in ``cfg``.

    Without explicit values, ``lam`` is 100 times the noise level, floored at
    1e-8 of the RMS of the acquired samples so noiseless data keeps a small
    positive weight; ``beta`` is ``lam / lam_over_beta``.
    """
    if cfg.lam is not None:
        lam = cfg.lam
    else:
        nz = np.abs(b[b != 0])
        rms = float(np.sqrt(np.mean(nz ** 2))) if nz.size else 1.0
        lam = max(1e2 * cfg.noise_sigma, 1e-8 * rms)
    beta = cfg.beta if cfg.beta is not None else lam / cfg.lam_over_beta
    return lam, beta


def pslr_reconstruct(b, mask, cfg=None):
    """Run the IRLS alternation from the zero-filled start.

    Returns
    -------
    x : ndarray, (coils, H, W)
        Final k-space iterate.
    trace : PslrTrace
        Per-iteration eps, cost, relative change and wall-clock seconds.
    """
    cfg = cfg or PslrConfig()
    b = check_multichannel(np.asarray(b, dtype=np.complex128), "b")
    kept = as_kept(mask)
    if b.shape[-2:] != kept.shape:
        raise DimensionError(f"data {b.shape} and mask {kept.shape} disagree")
    if not np.all(np.isfinite(b)):
        raise ValueError("measurements contain NaN or infinite values")
    lcfg = LiftConfig.for_data(b, cfg.filter_size)
    lam, beta = resolve_weights(b, cfg)
    lam_over_beta = lam / beta
    trace = PslrTrace(lam=lam, beta=beta)

    x = np.where(kept, b, 0)
    eps = cfg.eps0
    eps_min = None
    for it in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        g = gram(x, lcfg)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"Gram matrix overflowed at iteration {it}")
        if eps is None:
            eps = cfg.eps_scale * float(linalg.eigvalsh(g)[-1])
            if eps <= 0:
                raise NumericalError("initial Gram matrix is zero; cannot set eps")
        if eps_min is None:
            eps_min = cfg.eps_min_ratio * eps
        bank = weights_from_gram(g, eps, lcfg)
        z = linear_denoise(x, bank, lam_over_beta)
        x_new = dc_solve(z, b, kept, beta)
        if not np.all(np.isfinite(x_new)):
            raise NumericalError(f"non-finite iterate at iteration {it}")
        change = float(np.linalg.norm(x_new - x) / max(np.linalg.norm(x), 1e-300))
        x = x_new
        trace.seconds.append(time.perf_counter() - t0)
        trace.eps.append(eps)
        trace.rel_change.append(change)
        if cfg.track_cost:
            trace.cost.append(irls_cost(x, b, kept, lam, lcfg))
        log.debug("iter %d eps %.3e change %.3e", it, eps, change)
        eps = max(cfg.eps_decay * eps, eps_min)
        if change < cfg.tol:
            trace.stopped_early = True
            break
    return x, trace
