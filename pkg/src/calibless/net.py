"""Unrolled k-space and hybrid networks with hand-written reverse mode.

Complex multi-coil data ``(B, N, H, W)`` is fed to the CNNs as ``2N`` real
channels ``[Re x_1 .. Re x_N, Im x_1 .. Im x_N]``. Internally activations
are laid out channel-first, ``(C, B, H, W)``, so a convolution is a single
matrix product against the im2col patch matrix.

Gradients with respect to complex arrays follow the convention
``dL/dRe + 1j * dL/dIm``; under it the adjoint of a complex-linear map
carries the gradient backwards.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import DimensionError, fft2c, ifft2c
from .pslr import dc_solve
from .sim import make_rng

N_LAYERS = 5


# --- parameters --------------------------------------------------------------

@dataclass
class ConvLayer:
    kernel: np.ndarray  # (out, in, k, k)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        k = self.kernel.shape[-1]
        if self.kernel.ndim != 4 or self.kernel.shape[-2] != k or k % 2 == 0:
            raise ValueError(f"kernel must be (out, in, k, k) with odd k, got {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[0],):
            raise ValueError("bias length must match output channels")


@dataclass
class DenoiserParams:
    layers: list

    def __post_init__(self):
        if len(self.layers) != N_LAYERS:
            raise ValueError(f"denoiser needs {N_LAYERS} layers, got {len(self.layers)}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.kernel.shape[0] != b.kernel.shape[1]:
                raise ValueError("adjacent layer channel counts do not match")
        if self.layers[0].kernel.shape[1] != self.layers[-1].kernel.shape[0]:
            raise ValueError("first/last layer channel counts must agree")

    @property
    def channels(self):
        return self.layers[0].kernel.shape[1]

    @property
    def width(self):
        return self.layers[0].kernel.shape[0]

    @property
    def kernel_size(self):
        return self.layers[0].kernel.shape[-1]


def init_denoiser(channels, width, kernel_size=3, rng=None, zero_last=True, dtype=np.float64):
    """He-uniform kernels, zero biases; the last layer is zeroed by default."""
    rng = rng if rng is not None else make_rng(0)
    plan = [channels] + [width] * (N_LAYERS - 1) + [channels]
    layers = []
    for i, (cin, cout) in enumerate(zip(plan, plan[1:])):
        fan_in = cin * kernel_size * kernel_size
        bound = math.sqrt(6.0 / fan_in)
        kern = rng.uniform(-bound, bound, size=(cout, cin, kernel_size, kernel_size))
        if zero_last and i == N_LAYERS - 1:
            kern = np.zeros_like(kern)
        layers.append(ConvLayer(kern.astype(dtype), np.zeros(cout, dtype=dtype)))
    return DenoiserParams(layers)


def zero_denoiser(channels, width, kernel_size=3):
    plan = [channels] + [width] * (N_LAYERS - 1) + [channels]
    return DenoiserParams([
        ConvLayer(np.zeros((co, ci, kernel_size, kernel_size)), np.zeros(co))
        for ci, co in zip(plan, plan[1:])
    ])


@dataclass
class NetParams:
    """Shared-weight parameters of an unrolled network.

    ``image`` is the image-domain denoiser; its presence makes the network
    hybrid. DC weights are stored as logarithms.
    """

    kspace: DenoiserParams
    image: DenoiserParams = None
    log_beta_k: float = 0.0
    log_beta_i: float = 0.0
    unrolls: int = 5
    train_beta: bool = True

    def __post_init__(self):
        if self.unrolls < 1:
            raise ValueError("unrolls must be >= 1")
        if self.image is not None and self.image.channels != self.kspace.channels:
            raise ValueError("image and k-space denoisers must see the same channel count")

    @property
    def hybrid(self):
        return self.image is not None

    @property
    def coils(self):
        return self.kspace.channels // 2

    @property
    def beta_k(self):
        return math.exp(self.log_beta_k)

    @property
    def beta_i(self):
        return math.exp(self.log_beta_i)

    def named_arrays(self):
        """Trainable tensors keyed by name (log-betas as 0-d arrays)."""
        out = {}
        nets = [("dk", self.kspace)] + ([("di", self.image)] if self.hybrid else [])
        for tag, d in nets:
            for i, layer in enumerate(d.layers):
                out[f"{tag}.{i}.kernel"] = layer.kernel
                out[f"{tag}.{i}.bias"] = layer.bias
        if self.train_beta:
            out["log_beta_k"] = np.array(self.log_beta_k)
            if self.hybrid:
                out["log_beta_i"] = np.array(self.log_beta_i)
        return out

    def update(self, arrays):
        """Write arrays from :meth:`named_arrays` layout back into the params."""
        nets = {"dk": self.kspace, "di": self.image}
        for name, value in arrays.items():
            if name == "log_beta_k":
                self.log_beta_k = float(value)
            elif name == "log_beta_i":
                self.log_beta_i = float(value)
            else:
                tag, idx, kind = name.split(".")
                setattr(nets[tag].layers[int(idx)], kind, value)

    def copy(self):
        def dup(d):
            if d is None:
                return None
            return DenoiserParams([ConvLayer(l.kernel.copy(), l.bias.copy()) for l in d.layers])
        return NetParams(dup(self.kspace), dup(self.image), self.log_beta_k,
                         self.log_beta_i, self.unrolls, self.train_beta)


def init_net(coils, width=8, unrolls=5, hybrid=False, kernel_size=3, seed=0,
             beta_init=1.0, train_beta=True):
    rng = make_rng(seed)
    dk = init_denoiser(2 * coils, width, kernel_size, rng)
    di = init_denoiser(2 * coils, width, kernel_size, rng) if hybrid else None
    lb = math.log(beta_init)
    return NetParams(dk, di, lb, lb, unrolls, train_beta)


# --- real/complex views ------------------------------------------------------

def to_real(x):
    """``(B, N, H, W)`` complex -> ``(2N, B, H, W)`` real."""
    xt = np.moveaxis(x, 1, 0)
    return np.concatenate([xt.real, xt.imag], axis=0)


def from_real(r):
    n = r.shape[0] // 2
    return np.moveaxis(r[:n] + 1j * r[n:], 0, 1)


# --- denoiser ----------------------------------------------------------------

def _check_channels(r, p):
    if r.shape[0] != p.channels:
        raise DimensionError(f"denoiser expects {p.channels} real channels, got {r.shape[0]}")


def cnn_forward(r, p, cache=None):
    """Residual CNN on real channels: ``r + N(r)``.

    ``cache`` (a list) receives each layer's input and patch matrix for
    :func:`cnn_backward`.
    """
    _check_channels(r, p)
    c, nb, h, w = r.shape
    a = r
    for i, layer in enumerate(p.layers):
        k = layer.kernel.shape[-1]
        cols = kernels.im2col(a, k)
        if cache is not None:
            cache.append((a, cols))
        y = layer.kernel.reshape(layer.kernel.shape[0], -1) @ cols
        y += layer.bias[:, None]
        y = y.reshape(layer.kernel.shape[0], nb, h, w)
        a = np.maximum(y, 0) if i < N_LAYERS - 1 else y
    return r + a


def cnn_backward(g, p, cache):
    """Gradients of the residual CNN.

    Returns ``(grad_input, [(grad_kernel, grad_bias), ...])``.
    """
    c, nb, h, w = g.shape
    grads = [None] * N_LAYERS
    gy = g
    for i in range(N_LAYERS - 1, -1, -1):
        layer = p.layers[i]
        a, cols = cache[i]
        k = layer.kernel.shape[-1]
        cout, cin = layer.kernel.shape[:2]
        gmat = gy.reshape(cout, -1)
        gk = (gmat @ cols.T).reshape(layer.kernel.shape)
        gb = gmat.sum(axis=1)
        grads[i] = (gk, gb)
        ga = kernels.col2im(layer.kernel.reshape(cout, -1).T @ gmat, cin, nb, h, w, k)
        if i > 0:
            ga *= a > 0  # a = relu(previous pre-activation)
        gy = ga
    return g + gy, grads


def _batched(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise DimensionError(f"expected (N, H, W) or (B, N, H, W), got {x.shape}")
    return x, False


def denoiser_forward(x, p, domain="kspace"):
    """Apply ``D(x) = x + N(x)`` to complex multi-coil data.

    ``domain`` is informational: the same block serves k-space and image
    inputs; only the parameters differ.
    """
    if domain not in ("kspace", "image"):
        raise ValueError(f"unknown domain {domain!r}")
    xb, single = _batched(x)
    out = from_real(cnn_forward(to_real(xb).astype(p.layers[0].kernel.dtype), p))
    return out[0] if single else out


# --- data consistency ----------------------------------------------------------

def _kept_for(mask, x):
    kept = np.asarray(getattr(mask, "kept", mask), dtype=bool)
    if kept.shape[-2:] != x.shape[-2:]:
        raise DimensionError(f"mask {kept.shape} does not match data {x.shape}")
    if x.ndim == 4 and kept.ndim == 3:
        kept = kept[:, None]
    return kept


def dc_block_k(z, b, mask, beta_k):
    """Data consistency for the k-space network (same closed form as the solver)."""
    return dc_solve(z, b, _kept_for(mask, np.asarray(z)), beta_k)


def dc_block_hybrid(z_k, z_image, b, mask, beta_k, beta_i):
    """Joint minimizer of ``||Ax-b||^2 + beta_k||x-z_k||^2 + beta_i||x-F z_image||^2``."""
    if not beta_k > 0 or beta_i < 0:
        raise ValueError(f"need beta_k > 0 and beta_i >= 0, got {beta_k}, {beta_i}")
    z_k = np.asarray(z_k)
    b = np.asarray(b)
    if z_k.shape != b.shape or np.shape(z_image) != b.shape:
        raise DimensionError("z_k, z_image and b must share a shape")
    kept = _kept_for(mask, z_k)
    z_i = fft2c(z_image)
    num = beta_k * z_k + beta_i * z_i
    return np.where(kept, (b + num) / (1.0 + beta_k + beta_i), num / (beta_k + beta_i))


# --- unrolled networks -----------------------------------------------------------

@dataclass
class ForwardCache:
    b: np.ndarray
    kept: np.ndarray
    steps: list = field(default_factory=list)


def _forward(b, mask, p, cache=None):
    b, single = _batched(b)
    if 2 * b.shape[1] != p.kspace.channels:
        raise DimensionError(f"network built for {p.coils} coils, data has {b.shape[1]}")
    kept = _kept_for(mask, b)
    dtype = p.kspace.layers[0].kernel.dtype
    bk, bi = p.beta_k, p.beta_i
    x = np.where(kept, b, 0).astype(np.complex128)
    if cache is not None:
        cache.b, cache.kept = b, kept
    for _ in range(p.unrolls):
        step = {"x": x, "ck": [], "ci": []}
        zk = from_real(cnn_forward(to_real(x).astype(dtype), p.kspace, step["ck"]))
        if p.hybrid:
            img = ifft2c(x)
            zimg = from_real(cnn_forward(to_real(img).astype(dtype), p.image, step["ci"]))
            zi = fft2c(zimg)
            num = bk * zk + bi * zi
            x = np.where(kept, (b + num) / (1 + bk + bi), num / (bk + bi))
            step["zi"] = zi
        else:
            x = np.where(kept, (b + bk * zk) / (1 + bk), zk)
        step["zk"] = zk
        step["out"] = x
        if cache is not None:
            cache.steps.append(step)
    return (x[0] if single else x), single


def forward_kspace_net(b, mask, p, cache=None):
    """K alternations of the k-space denoiser and data consistency."""
    if p.hybrid:
        raise ValueError("parameters describe a hybrid network")
    return _forward(b, mask, p, cache)[0]


def forward_hybrid_net(b, mask, p, cache=None):
    """K alternations of parallel k-space/image denoisers and joint data consistency."""
    if not p.hybrid:
        raise ValueError("parameters have no image-domain denoiser")
    return _forward(b, mask, p, cache)[0]


def forward(b, mask, p, cache=None):
    return _forward(b, mask, p, cache)[0]


def backward(grad_out, cache, p):
    """Reverse-mode gradients of a scalar loss through all unrolls.

    ``grad_out`` is ``dL/dRe + 1j dL/dIm`` of the network output. Returns a
    dict keyed like :meth:`NetParams.named_arrays`.
    """
    if cache is None or not cache.steps:
        raise ValueError("backward needs the cache filled by a forward pass")
    g = np.asarray(grad_out)
    if g.ndim == 3:
        g = g[None]
    kept = cache.kept
    bk, bi = p.beta_k, p.beta_i
    dtype = p.kspace.layers[0].kernel.dtype
    grads = {}

    def accumulate(tag, layer_grads):
        for i, (gk, gb) in enumerate(layer_grads):
            for kind, val in (("kernel", gk), ("bias", gb)):
                key = f"{tag}.{i}.{kind}"
                grads[key] = grads[key] + val if key in grads else val

    d_lbk = 0.0
    d_lbi = 0.0
    for step in reversed(cache.steps):
        x_out, zk = step["out"], step["zk"]
        if p.hybrid:
            zi = step["zi"]
            den = np.where(kept, 1 + bk + bi, bk + bi)
            d_lbk += bk * float(np.sum((np.conj(g) * (zk - x_out)).real / den))
            d_lbi += bi * float(np.sum((np.conj(g) * (zi - x_out)).real / den))
            g_zk = g * (bk / den)
            g_zi = g * (bi / den)
        else:
            den = np.where(kept, 1 + bk, 1.0)
            d_lbk += bk * float(np.sum((np.conj(g) * (zk - x_out)).real / den))
            g_zk = g * np.where(kept, bk / (1 + bk), 1.0)
        gr, lg = cnn_backward(to_real(g_zk).astype(dtype), p.kspace, step["ck"])
        accumulate("dk", lg)
        g_x = from_real(gr)
        if p.hybrid:
            gr_i, lg_i = cnn_backward(to_real(ifft2c(g_zi)).astype(dtype), p.image, step["ci"])
            accumulate("di", lg_i)
            g_x = g_x + fft2c(from_real(gr_i))
        g = g_x
    if p.train_beta:
        grads["log_beta_k"] = np.array(d_lbk)
        if p.hybrid:
            grads["log_beta_i"] = np.array(d_lbi)
    return grads


# --- losses ----------------------------------------------------------------------

def kspace_mse(x, target):
    """Mean squared k-space error over all coils and its gradient."""
    d = x - target
    n = d.size
    return float(np.sum(np.abs(d) ** 2) / n), 2.0 * d / n


def image_mse(x, target):
    """Mean squared error of SOS images and its gradient with respect to ``x``."""
    img = ifft2c(x)
    s = np.sqrt(np.sum(np.abs(img) ** 2, axis=-3, keepdims=True))
    st = np.sqrt(np.sum(np.abs(ifft2c(target)) ** 2, axis=-3, keepdims=True))
    d = s - st
    n = d.size
    safe = np.where(s > 0, s, 1.0)
    g_img = np.where(s > 0, (2.0 * d / n) * img / safe, 0)
    return float(np.sum(d ** 2) / n), fft2c(g_img)


LOSSES = {"kspace": kspace_mse, "image": image_mse}
