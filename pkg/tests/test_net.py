import numpy as np
import pytest

from calibless import net
from calibless.core import DimensionError, fft2c
from calibless.dataset import SimConfig, build_dataset
from calibless.train import TrainConfig, TrainingError, train
from conftest import crandn, finite_difference_check, randomized_net


def naive_cnn(x, p):
    """Nested-loop residual CNN on complex (N, H, W) data."""
    n, h, w = x.shape
    a = np.concatenate([x.real, x.imag]).astype(np.float64)
    for li, layer in enumerate(p.layers):
        kern, bias = layer.kernel.astype(np.float64), layer.bias.astype(np.float64)
        cout, cin, k, _ = kern.shape
        r = k // 2
        y = np.zeros((cout, h, w))
        for o in range(cout):
            for i in range(h):
                for j in range(w):
                    acc = bias[o]
                    for c in range(cin):
                        for u in range(k):
                            for v in range(k):
                                ii, jj = i + u - r, j + v - r
                                if 0 <= ii < h and 0 <= jj < w:
                                    acc += kern[o, c, u, v] * a[c, ii, jj]
                    y[o, i, j] = acc
        a = np.maximum(y, 0) if li < len(p.layers) - 1 else y
    return x + (a[:n] + 1j * a[n:])


def test_zero_denoiser_is_identity(rng):
    x = crandn(rng, 3, 7, 6)
    np.testing.assert_array_equal(net.denoiser_forward(x, net.zero_denoiser(6, 5)), x)


def test_identity_construction_doubles_nonnegative_input(rng):
    n = 2
    layers = []
    for _ in range(net.N_LAYERS):
        k = np.zeros((2 * n, 2 * n, 3, 3))
        k[np.arange(2 * n), np.arange(2 * n), 1, 1] = 1.0
        layers.append(net.ConvLayer(k, np.zeros(2 * n)))
    p = net.DenoiserParams(layers)
    x = rng.random((n, 6, 6)) + 1j * rng.random((n, 6, 6))
    np.testing.assert_allclose(net.denoiser_forward(x, p), 2 * x, atol=1e-15)


@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-6)])
def test_matches_naive_reference(dtype, tol, rng):
    p = randomized_net(2, 3, 1, False, seed=5).kspace
    for layer in p.layers:
        layer.kernel, layer.bias = layer.kernel.astype(dtype), layer.bias.astype(dtype)
    x = crandn(rng, 2, 6, 5)
    if dtype == np.float32:
        x = x.astype(np.complex64).astype(np.complex128)
    ref = naive_cnn(x, p)
    out = net.denoiser_forward(x, p, "image")
    assert np.abs(out - ref).max() <= tol * max(1.0, np.abs(ref).max())


def test_batched_matches_single(rng):
    p = randomized_net(2, 4, 1, False, seed=1).kspace
    x = crandn(rng, 3, 2, 6, 6)
    np.testing.assert_allclose(net.denoiser_forward(x, p)[1], net.denoiser_forward(x[1], p), atol=1e-13)


def test_channel_mismatch():
    with pytest.raises(DimensionError):
        net.denoiser_forward(np.zeros((3, 4, 4), complex), net.zero_denoiser(4, 2))


def test_denoiser_param_validation():
    p = net.zero_denoiser(4, 3)
    with pytest.raises(ValueError):
        net.DenoiserParams(p.layers[:4])
    with pytest.raises(ValueError):
        net.ConvLayer(np.zeros((2, 2, 2, 2)), np.zeros(2))


def dense_hybrid_dc(zk, zimg, b, kept, bk, bi):
    n, h, w = b.shape
    size = n * h * w
    a = np.diag(np.tile(kept.ravel(), n).astype(float))
    lhs = a + (bk + bi) * np.eye(size)
    rhs = a @ b.ravel() + bk * zk.ravel() + bi * fft2c(zimg).ravel()
    return lhs, rhs


@pytest.mark.parametrize("bk,bi", [(1.0, 1.0), (0.1, 3.0), (2.0, 0.0)])
def test_hybrid_dc_optimality(bk, bi, rng):
    kept = rng.random((4, 5)) < 0.5
    zk, zi = crandn(rng, 2, 4, 5), crandn(rng, 2, 4, 5)
    b = np.where(kept, crandn(rng, 2, 4, 5), 0)
    out = net.dc_block_hybrid(zk, zi, b, kept, bk, bi)
    lhs, rhs = dense_hybrid_dc(zk, zi, b, kept, bk, bi)
    np.testing.assert_allclose(out.ravel(), np.linalg.solve(lhs, rhs), atol=1e-13)
    assert np.linalg.norm(lhs @ out.ravel() - rhs) < 1e-12 * np.linalg.norm(rhs)


def test_hybrid_dc_reduces_to_kspace_dc(rng):
    kept = rng.random((4, 4)) < 0.5
    zk, zi = crandn(rng, 2, 4, 4), crandn(rng, 2, 4, 4)
    b = np.where(kept, crandn(rng, 2, 4, 4), 0)
    np.testing.assert_allclose(net.dc_block_hybrid(zk, zi, b, kept, 0.7, 0.0),
                               net.dc_block_k(zk, b, kept, 0.7), atol=1e-15)


def test_hybrid_dc_rejects_bad_weights(rng):
    z = np.zeros((1, 2, 2))
    with pytest.raises(ValueError):
        net.dc_block_hybrid(z, z, z, np.ones((2, 2), bool), 0.0, 1.0)


@pytest.mark.parametrize("hybrid", [False, True])
def test_zero_weights_reproduce_measurements(hybrid, rng):
    p = net.init_net(2, width=3, unrolls=3, hybrid=hybrid, seed=0)
    for d in [p.kspace] + ([p.image] if hybrid else []):
        for layer in d.layers:
            layer.kernel[:] = 0
    kept = rng.random((8, 8)) < 0.4
    b = np.where(kept, crandn(rng, 2, 8, 8), 0)
    out = net.forward(b, kept, p)
    np.testing.assert_allclose(out, b, atol=1e-14 * np.abs(b).max())


def test_fresh_init_is_dc_cascade_fixed_point(rng):
    p = net.init_net(2, width=4, unrolls=2, seed=3)
    kept = rng.random((8, 8)) < 0.4
    b = np.where(kept, crandn(rng, 2, 8, 8), 0)
    np.testing.assert_array_equal(net.forward_kspace_net(b, kept, p), b)


def test_hybrid_with_inert_image_branch_matches_kspace(rng):
    pk = randomized_net(2, 4, 3, False, seed=7)
    ph = net.NetParams(pk.kspace, net.zero_denoiser(4, 4), pk.log_beta_k, np.log(1e-12), 3)
    kept = rng.random((8, 8)) < 0.5
    b = np.where(kept, crandn(rng, 2, 8, 8), 0)
    xk = net.forward_kspace_net(b, kept, pk)
    xh = net.forward_hybrid_net(b, kept, ph)
    assert np.linalg.norm(xh - xk) <= 1e-6 * np.linalg.norm(xk)


def test_arch_mismatch_errors(rng):
    pk = net.init_net(2, width=2, unrolls=1)
    ph = net.init_net(2, width=2, unrolls=1, hybrid=True)
    b = np.zeros((2, 4, 4), complex)
    with pytest.raises(ValueError):
        net.forward_hybrid_net(b, np.ones((4, 4), bool), pk)
    with pytest.raises(ValueError):
        net.forward_kspace_net(b, np.ones((4, 4), bool), ph)
    with pytest.raises(DimensionError):
        net.forward(np.zeros((3, 4, 4)), np.ones((4, 4), bool), pk)
    with pytest.raises(ValueError):
        net.backward(np.zeros((2, 4, 4)), None, pk)


@pytest.mark.parametrize("hybrid", [False, True])
def test_gradients_match_finite_differences(hybrid):
    assert finite_difference_check(hybrid, seed=2) < 1e-4


def test_image_loss_gradient():
    assert finite_difference_check(False, seed=4, unrolls=1, loss="image") < 1e-4


@pytest.mark.parametrize("hybrid", [False, True])
def test_backward_is_linear_in_loss_gradient(hybrid, rng):
    p = randomized_net(2, 3, 2, hybrid, seed=1)
    kept = rng.random((6, 6)) < 0.5
    b = np.where(kept, crandn(rng, 2, 6, 6), 0)
    cache = net.ForwardCache(None, None)
    net.forward(b, kept, p, cache)
    g = crandn(rng, 2, 6, 6)
    alpha = -2.5
    g1, g2 = net.backward(g, cache, p), net.backward(alpha * g, cache, p)
    for k in g1:
        np.testing.assert_allclose(g2[k], alpha * g1[k], rtol=1e-12, atol=1e-12 * np.abs(g1[k]).max())


def test_beta_gradient_vanishes_at_fixed_point(rng):
    p = net.init_net(2, width=3, unrolls=2, seed=0)
    p.kspace.layers[-1].kernel[:] = 0
    b = crandn(rng, 2, 6, 6)
    full = np.ones((6, 6), bool)
    cache = net.ForwardCache(None, None)
    out = net.forward(b, full, p, cache)
    grads = net.backward(out, cache, p)  # loss = ||out||^2 / 2
    assert grads["log_beta_k"] == 0.0


def test_params_roundtrip_and_copy():
    p = net.init_net(2, width=3, unrolls=2, hybrid=True, seed=1)
    arrays = p.named_arrays()
    assert set(arrays) >= {"dk.0.kernel", "di.4.bias", "log_beta_k", "log_beta_i"}
    q = p.copy()
    q.update({"dk.0.kernel": arrays["dk.0.kernel"] + 1, "log_beta_i": np.array(0.5)})
    assert q.log_beta_i == 0.5 and p.log_beta_i == 0.0
    assert not np.array_equal(q.kspace.layers[0].kernel, p.kspace.layers[0].kernel)
    frozen = net.init_net(2, width=3, train_beta=False)
    assert "log_beta_k" not in frozen.named_arrays()


@pytest.fixture(scope="module")
def tiny_data():
    return build_dataset(SimConfig(shape=(12, 12), coils=2, count=5, seed=4, noise_sigma=0.01))


def test_zero_learning_rate_leaves_params(tiny_data):
    cfg = TrainConfig(epochs=2, batch_size=2, lr=0.0, width=3, unrolls=2)
    start = net.init_net(2, width=3, unrolls=2, seed=9)
    snapshot = {k: np.array(v, copy=True) for k, v in start.named_arrays().items()}
    params, log = train(tiny_data, cfg, params=start)
    for k, v in params.named_arrays().items():
        np.testing.assert_array_equal(v, snapshot[k])
    assert len(log.epochs) == 2


def test_identity_fit_starts_at_zero_loss():
    d = build_dataset(SimConfig(shape=(12, 12), coils=2, count=1, acceleration=1.0))
    _, log = train(d, TrainConfig(epochs=1, width=3, unrolls=2, lr=0.0, val_split=0.0))
    assert log.epochs[0]["train_loss"] < 1e-28


@pytest.mark.parametrize("arch", ["kspace", "hybrid"])
def test_training_is_deterministic(arch, tiny_data):
    cfg = TrainConfig(epochs=2, batch_size=2, lr=1e-3, width=3, unrolls=2, val_split=0.2)
    p1, l1 = train(tiny_data, cfg, arch)
    p2, l2 = train(tiny_data, cfg, arch)
    assert l1.epochs == l2.epochs
    for k, v in p1.named_arrays().items():
        assert v.tobytes() == p2.named_arrays()[k].tobytes()
    assert "val_loss" in l1.epochs[0]


def test_training_reduces_loss(tiny_data):
    cfg = TrainConfig(epochs=6, batch_size=2, lr=3e-3, width=4, unrolls=2, val_split=0.0)
    _, log = train(tiny_data, cfg)
    assert log.epochs[-1]["train_loss"] < log.epochs[0]["train_loss"]


def test_non_finite_loss_aborts(tiny_data, monkeypatch):
    monkeypatch.setitem(net.LOSSES, "kspace", lambda x, t: (float("nan"), np.zeros_like(x)))
    with pytest.raises(TrainingError, match="epoch 0, batch 0"):
        train(tiny_data, TrainConfig(epochs=1, width=2, unrolls=1))


def test_float32_training_runs(tiny_data):
    params, _ = train(tiny_data, TrainConfig(epochs=1, width=3, unrolls=1, dtype="float32"))
    assert params.kspace.layers[0].kernel.dtype == np.float32


def test_train_config_validation():
    for bad in ({"lr": -1.0}, {"loss": "l1"}, {"kernel_size": 2}, {"beta1": 1.0}, {"dtype": "half"}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
