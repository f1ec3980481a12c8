import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calibless import lifting as L
from calibless import sim
from calibless.core import DimensionError, fft2c
from conftest import crandn, inner


def naive_valid_conv(x, s):
    h, w = x.shape
    f1, f2 = s.shape
    out = np.zeros((h - f1 + 1, w - f2 + 1), complex)
    for a in range(out.shape[0]):
        for b in range(out.shape[1]):
            for p in range(f1):
                for q in range(f2):
                    out[a, b] += x[a + f1 - 1 - p, b + f2 - 1 - q] * s[p, q]
    return out


def random_case(r, n, h, w, f1, f2, filters=3):
    cfg = L.LiftConfig(n, (h, w), (f1, f2))
    return cfg, crandn(r, n, h, w), L.FilterBank(cfg, crandn(r, cfg.cols, filters))


cases = st.tuples(st.integers(1, 4), st.integers(1, 12), st.integers(1, 12),
                  st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1)).filter(
    lambda t: t[3] <= t[1] and t[4] <= t[2])


def test_shape():
    cfg = L.LiftConfig(3, (10, 9), (3, 4))
    assert L.lift(np.zeros((3, 10, 9)), cfg).shape == (8 * 6, 36) == (cfg.rows, cfg.cols)


def test_one_tap_single_coil_is_column(rng):
    x = crandn(rng, 1, 4, 5)
    t = L.lift(x, L.LiftConfig(1, (4, 5), (1, 1)))
    np.testing.assert_array_equal(t[:, 0], x.ravel())


def test_three_by_three_worked_example():
    x = np.arange(1, 10, dtype=complex).reshape(1, 3, 3)
    t = L.lift(x, L.LiftConfig(1, (3, 3), (2, 2)))
    assert t.shape == (4, 4)
    np.testing.assert_array_equal(t[0], [5, 4, 2, 1])
    np.testing.assert_array_equal(t[3], [9, 8, 6, 5])


@settings(max_examples=30, deadline=None)
@given(cases)
def test_lift_is_valid_convolution(c):
    n, h, w, f1, f2, seed = c
    r = np.random.default_rng(seed)
    cfg = L.LiftConfig(n, (h, w), (f1, f2))
    x, s = crandn(r, n, h, w), crandn(r, n, f1, f2)
    expected = sum(naive_valid_conv(x[i], s[i]) for i in range(n)).ravel()
    np.testing.assert_allclose(L.lift(x, cfg) @ s.ravel(), expected, atol=1e-12 * (1 + np.abs(expected).max()))
    np.testing.assert_allclose(L.lift_matvec(x, s.ravel(), cfg), expected, atol=1e-11)


@settings(max_examples=30, deadline=None)
@given(cases)
def test_lift_adjoint_inner_product(c):
    n, h, w, f1, f2, seed = c
    r = np.random.default_rng(seed)
    cfg = L.LiftConfig(n, (h, w), (f1, f2))
    x, y = crandn(r, n, h, w), crandn(r, cfg.rows, cfg.cols)
    lhs, rhs = inner(L.lift(x, cfg), y), inner(x, L.lift_adjoint(y, cfg))
    assert abs(lhs - rhs) < 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)


def test_lift_adjoint_counts_patch_membership():
    cfg = L.LiftConfig(1, (5, 6), (2, 3))
    ones = np.ones((cfg.rows, cfg.cols))
    out = L.lift_adjoint(ones, cfg)[0]
    expected = np.zeros((5, 6))
    for a in range(4):
        for b in range(4):
            expected[a:a + 2, b:b + 3] += 1
    np.testing.assert_array_equal(out, expected)


def test_lift_adjoint_of_delta_lift():
    cfg = L.LiftConfig(1, (5, 5), (3, 3))
    x = np.zeros((1, 5, 5), complex)
    x[0, 2, 2] = 2.0
    out = L.lift_adjoint(L.lift(x, cfg), cfg)
    expected = np.zeros((1, 5, 5))
    expected[0, 2, 2] = 2.0 * 9  # the center pixel lies in all nine patches
    np.testing.assert_array_equal(out, expected)


def test_lift_adjoint_zero():
    cfg = L.LiftConfig(2, (4, 4), (2, 2))
    assert not L.lift_adjoint(np.zeros((cfg.rows, cfg.cols)), cfg).any()


def test_gram_dense_and_psd(rng):
    cfg = L.LiftConfig(3, (12, 10), (3, 3))
    x = crandn(rng, 3, 12, 10)
    t = L.lift(x, cfg)
    g = L.gram(x, cfg)
    np.testing.assert_allclose(g, t.conj().T @ t, atol=1e-10)
    assert np.abs(g - g.conj().T).max() == 0
    ev = np.linalg.eigvalsh(g)
    assert ev.min() >= -1e-10 * ev.max()
    assert not L.gram(np.zeros_like(x), cfg).any()


def test_implicit_gram_matches_dense(rng):
    cfg = L.LiftConfig(2, (9, 11), (3, 4))
    x, v = crandn(rng, 2, 9, 11), crandn(rng, cfg.cols)
    np.testing.assert_allclose(L.gram_matvec(x, v, cfg), L.gram(x, cfg) @ v, atol=1e-10)
    u = crandn(rng, cfg.rows)
    np.testing.assert_allclose(L.lift_rmatvec(x, u, cfg), L.lift(x, cfg).conj().T @ u, atol=1e-11)


@settings(max_examples=30, deadline=None)
@given(cases)
def test_filterbank_commutes_with_lift(c):
    n, h, w, f1, f2, seed = c
    cfg, x, bank = random_case(np.random.default_rng(seed), n, h, w, f1, f2)
    y = L.filterbank_apply(bank, x)
    np.testing.assert_allclose(y.reshape(bank.n_filters, -1).T, L.lift(x, cfg) @ bank.columns,
                               atol=1e-12 * (1 + np.abs(y).max()))
    assert abs(np.linalg.norm(L.lift(x, cfg) @ bank.columns) - np.linalg.norm(y)) \
        <= 1e-12 * np.linalg.norm(y) + 1e-300


@settings(max_examples=30, deadline=None)
@given(cases)
def test_filterbank_adjoint_inner_product(c):
    n, h, w, f1, f2, seed = c
    r = np.random.default_rng(seed)
    cfg, x, bank = random_case(r, n, h, w, f1, f2)
    y = crandn(r, bank.n_filters, *cfg.out_shape)
    lhs, rhs = inner(L.filterbank_apply(bank, x), y), inner(x, L.filterbank_adjoint(bank, y))
    assert abs(lhs - rhs) < 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)


def test_one_hot_center_filter_crops(rng):
    cfg = L.LiftConfig(2, (8, 9), (3, 3))
    cols = np.zeros((cfg.cols, 1))
    cols[4] = 1  # coil 0, tap (1, 1)
    bank = L.FilterBank(cfg, cols)
    x = crandn(rng, 2, 8, 9)
    np.testing.assert_array_equal(L.filterbank_apply(bank, x)[0], x[0, 1:-1, 1:-1])
    y = crandn(rng, 1, 6, 7)
    back = L.filterbank_adjoint(bank, y)
    expected = np.zeros((2, 8, 9), complex)
    expected[0, 1:-1, 1:-1] = y[0]
    np.testing.assert_array_equal(back, expected)


def test_zero_filterbank_and_zero_responses(rng):
    cfg = L.LiftConfig(2, (6, 6), (3, 3))
    bank = L.FilterBank(cfg, np.zeros((cfg.cols, 4)))
    assert not L.filterbank_apply(bank, crandn(rng, 2, 6, 6)).any()
    bank = L.FilterBank(cfg, crandn(rng, cfg.cols, 4))
    assert not L.filterbank_adjoint(bank, np.zeros((4, 4, 4))).any()


def test_filterbank_linearity(rng):
    cfg, x, bank = random_case(rng, 3, 10, 10, 3, 3)
    y = crandn(rng, 3, 10, 10)
    a, b = 0.3 - 1.2j, 2.0 + 0.5j
    lhs = L.filterbank_apply(bank, a * x + b * y)
    rhs = a * L.filterbank_apply(bank, x) + b * L.filterbank_apply(bank, y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.abs(rhs).max())


def test_filterbank_matrix_matches_apply(rng):
    cfg, x, bank = random_case(rng, 2, 5, 6, 2, 3)
    m = L.filterbank_matrix(bank)
    np.testing.assert_allclose(m @ x.ravel(), L.filterbank_apply(bank, x).ravel(), atol=1e-12)


def test_config_mismatch():
    cfg = L.LiftConfig(2, (6, 6), (3, 3))
    with pytest.raises(DimensionError):
        L.lift(np.zeros((3, 6, 6)), cfg)
    with pytest.raises(DimensionError):
        L.lift_adjoint(np.zeros((4, 4)), cfg)
    with pytest.raises(DimensionError):
        L.LiftConfig(1, (4, 4), (5, 1))
    with pytest.raises(DimensionError):
        L.FilterBank(cfg, np.zeros((17, 2)))


def bandlimited_case(coils, shape=(32, 32), support=(5, 5), seed=0):
    img = sim.make_phantom(sim.random_phantom_spec(shape, seed))
    s = sim.make_sensitivities(sim.SensitivitySpec(coils, support, seed=seed + 1), shape)
    rs, cs = sim.kspace_window(shape, support)
    return sim.coil_kspace(img, s), fft2c(s)[:, rs, cs]


def test_null_vector_witness():
    x, shat = bandlimited_case(2)
    cfg = L.LiftConfig(2, (32, 32), (5, 5))
    t = L.lift(x, cfg)
    v = np.concatenate([shat[1].ravel(), -shat[0].ravel()])
    assert np.linalg.norm(t @ v) < 1e-8 * np.linalg.norm(t)


def test_rank_deficiency_with_larger_filter():
    n = 3
    x, _ = bandlimited_case(n)
    t = L.lift(x, L.LiftConfig(n, (32, 32), (7, 7)))
    sv = np.linalg.svd(t, compute_uv=False)
    assert np.sum(sv < 1e-8 * sv[0]) >= n * (n - 1) // 2
