import numpy as np
import pytest


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def inner(a, b):
    """Complex inner product <a, b> = sum(conj(a) * b)."""
    return np.vdot(np.ravel(a), np.ravel(b))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def randomized_net(coils, width, unrolls, hybrid, seed):
    """Tiny network with every parameter (including the last layer) nonzero."""
    from calibless import net

    r = np.random.default_rng(seed)
    p = net.init_net(coils, width=width, unrolls=unrolls, hybrid=hybrid, seed=seed)
    for d in [p.kspace] + ([p.image] if hybrid else []):
        for layer in d.layers:
            layer.kernel[:] = r.uniform(-0.5, 0.5, layer.kernel.shape)
            layer.bias[:] = r.uniform(-0.1, 0.1, layer.bias.shape)
    p.log_beta_k, p.log_beta_i = 0.3, -0.2
    return p


def finite_difference_check(hybrid, seed=0, shape=(8, 8), coils=2, width=4, unrolls=2,
                            step=1e-5, loss="kspace"):
    """Worst relative error between analytic and central-difference gradients.

    Every scalar parameter is perturbed; the relative error uses the larger
    of the two magnitudes (floored at 1e-8) as denominator.
    """
    from calibless import net

    r = np.random.default_rng(seed + 100)
    p = randomized_net(coils, width, unrolls, hybrid, seed)
    mask = r.random((2, *shape)) < 0.5
    b = crandn(r, 2, coils, *shape) * mask[:, None]
    target = crandn(r, 2, coils, *shape)
    loss_fn = net.LOSSES[loss]

    def value(q):
        return loss_fn(net.forward(b, mask, q), target)[0]

    cache = net.ForwardCache(None, None)
    _, g = loss_fn(net.forward(b, mask, p, cache), target)
    grads = net.backward(g, cache, p)
    worst = 0.0
    for name, arr in p.named_arrays().items():
        for j in range(arr.size):
            def shifted(delta):
                q = p.copy()
                a = np.array(q.named_arrays()[name], dtype=np.float64, copy=True)
                a.reshape(-1)[j] += delta
                q.update({name: a if a.ndim else float(a)})
                return q

            fd = (value(shifted(step)) - value(shifted(-step))) / (2 * step)
            an = float(np.reshape(grads[name], -1)[j])
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
    return worst


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
