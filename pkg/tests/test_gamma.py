import numpy as np
import pytest
from hypothesis import given, strategies as st

from densembed import autodiff as ad
from densembed.densities import LogisticDensity, ParameterError, PiecewiseConstantDensity, logistic_pdf
from densembed.gamma import (
    GammaOperator, adaptive_conv_gamma, adaptive_pool_gamma, build_gamma_1d, build_gamma_2d_separable,
    build_gamma_numeric, build_gamma_numeric_2d_entry, conv_gamma, logistic_gamma,
)

# DERIVED: F(n) - F(n-1) evaluated in mpmath at 30 digits, frozen
FROZEN_ROWS = {
    (2.5, 1.0, 5): [0.10656734378511279, 0.19511514499178909, 0.24491866240370913, 0.19511514499178909,
                    0.10656734378511279],
    (0.3, 0.7, 4): [0.33659106585059057, 0.1879216527046873, 0.060328656395219955, 0.015653207098770796],
}


@pytest.mark.parametrize("key", list(FROZEN_ROWS))
def test_logistic_gamma_frozen_rows(key):
    mu, s, n = key
    got = build_gamma_1d([LogisticDensity(mu, s)], n).numpy()[0]
    np.testing.assert_allclose(got, FROZEN_ROWS[key], atol=1e-15)
    np.testing.assert_allclose(logistic_gamma(np.array([mu]), np.array([s]), n).data[0], FROZEN_ROWS[key], atol=1e-15)


def test_unit_indicators_give_identity():
    g = build_gamma_1d([PiecewiseConstantDensity(i - 1.0, float(i)) for i in range(1, 8)], 7)
    assert np.array_equal(g.numpy(), np.eye(7))


def test_apply_one_and_two_dimensional():
    g = GammaOperator(ad.Tensor([[1.0, 2.0], [3.0, 4.0]]), 2)
    np.testing.assert_array_equal(g.apply([1.0, 1.0]).data, [3.0, 7.0])
    g4 = GammaOperator(ad.Tensor(np.ones((1, 1, 2, 2))), 4)
    assert g4.apply([[1.0, 2.0], [3.0, 4.0]]).data.tolist() == [[10.0]]
    with pytest.raises(ValueError):
        GammaOperator(ad.Tensor(np.ones((2, 2))), 3)


def test_separable_matches_product_integral():
    f = [[LogisticDensity(1.7, 0.9)]]
    g = [[LogisticDensity(3.2, 1.4)]]
    gam = build_gamma_2d_separable(f, g, 4).numpy()
    assert gam.shape == (1, 1, 4, 4)
    # row m=2 (u over [1,2]), column n=3 (t over [2,3]); DERIVED mpmath value
    assert gam[0, 0, 1, 2] == pytest.approx(0.02853077500586974, abs=1e-12)
    pdf2 = lambda t, u: logistic_pdf(t, 1.7, 0.9) * logistic_pdf(u, 3.2, 1.4)
    assert build_gamma_numeric_2d_entry(pdf2, 2, 3) == pytest.approx(gam[0, 0, 1, 2], abs=1e-9)


@given(st.floats(-2, 10), st.floats(0.2, 6), st.integers(1, 16))
def test_rows_are_nonnegative_and_sub_stochastic(mu, s, n):
    row = logistic_gamma(np.array([mu]), np.array([s]), n).data[0]
    assert np.all(row >= 0)
    assert row.sum() <= 1.0 + 1e-12


@given(st.floats(-2, 10), st.floats(0.2, 6), st.integers(1, 16))
def test_closed_form_matches_quadrature(mu, s, n):
    closed = logistic_gamma(np.array([mu]), np.array([s]), n).data[0]
    numeric = build_gamma_numeric([lambda t: logistic_pdf(t, mu, s)], n).numpy()[0]
    np.testing.assert_allclose(closed, numeric, atol=1e-8)


@pytest.mark.parametrize("n,k,s", [(8, 3, 1), (9, 3, 2), (10, 2, 2), (7, 7, 1)])
def test_adaptive_conv_recovers_conv(n, k, s):
    for l in range(1, (n - k) // s + 2):
        assert np.array_equal(conv_gamma(n, k, s, l).numpy(), adaptive_conv_gamma(n, k, s, l, float(k)).numpy())


def test_conv_overrun_and_amplitude_errors():
    with pytest.raises(ValueError):
        conv_gamma(5, 3, 2, 3)
    with pytest.raises(ParameterError):
        adaptive_conv_gamma(8, 3, 1, 1, 0.0)


def test_adaptive_conv_row_mass():
    g = adaptive_conv_gamma(12, 3, 1, 2, 4.5).numpy()
    np.testing.assert_allclose(g.sum(axis=1), 1.5, atol=1e-15)
    gn = adaptive_conv_gamma(12, 3, 1, 2, 4.5, normalize=True).numpy()
    np.testing.assert_allclose(gn.sum(axis=1), 1.0, atol=1e-15)


def test_adaptive_conv_gradient_in_amplitude():
    p = ad.Tensor(2.3, requires_grad=True)
    w = np.random.default_rng(0).normal(size=(3, 10))
    loss = lambda v: ad.tsum(ad.mul(adaptive_conv_gamma(10, 3, 2, 2, v).entries, w))
    ad.backward(loss(p))
    num = ad.numeric_gradient(lambda v: loss(ad.Tensor(v)).item(), p.data)
    assert ad.relative_error(p.grad, num) < 1e-6


def _uniform_mean(x, lo, hi):
    cells = np.arange(len(x))
    m = np.clip(np.minimum(cells + 1, hi) - np.maximum(cells, lo), 0, None)
    return m @ x / m.sum(), x[m > 0]


@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(0, 4), st.floats(0.5, 2))
def test_pool_beta_zero_is_weighted_mean(xs, lo, width):
    x = np.array(xs)
    out = adaptive_pool_gamma(x, 0.0, [(lo, lo + width)], 6).apply(x).item()
    assert out == pytest.approx(_uniform_mean(x, lo, lo + width)[0], abs=1e-12)


@given(st.permutations(list(range(8))), st.integers(0, 5), st.integers(2, 3))
def test_pool_limits_max_min(perm, lo, width):
    x = np.array(perm, dtype=np.float64) * 0.5
    hi = min(lo + width, 8)
    inside = _uniform_mean(x, lo, hi)[1]
    top = adaptive_pool_gamma(x, 50.0, [(lo, hi)], 8).apply(x).item()
    bottom = adaptive_pool_gamma(x, -50.0, [(lo, hi)], 8).apply(x).item()
    assert abs(top - inside.max()) < 1e-6
    assert abs(bottom - inside.min()) < 1e-6


@given(st.floats(-30, 30))
def test_pool_rows_sum_to_one(beta):
    x = np.linspace(-2, 5, 9)
    g = adaptive_pool_gamma(x, beta, [(0.0, 3.0), (2.5, 9.0)], 9).numpy()
    np.testing.assert_allclose(g.sum(axis=1), 1.0, atol=1e-12)


def test_pool_large_beta_does_not_overflow():
    x = np.array([0.0, 400.0, 800.0])
    g = adaptive_pool_gamma(x, 10.0, [(0.0, 3.0)], 3).numpy()
    np.testing.assert_allclose(g, [[0.0, 0.0, 1.0]], atol=1e-300)


def test_pool_batched_matches_unbatched():
    xs = np.random.default_rng(1).normal(size=(3, 6))
    iv = [(0.0, 2.0), (1.5, 6.0)]
    batched = adaptive_pool_gamma(xs, 1.3, iv, 6)
    assert batched.provenance == "input-dependent"
    for b in range(3):
        np.testing.assert_allclose(batched.numpy()[b], adaptive_pool_gamma(xs[b], 1.3, iv, 6).numpy(), atol=1e-15)


def test_pool_rejects_bad_intervals():
    x = np.zeros(4)
    with pytest.raises(ParameterError):
        adaptive_pool_gamma(x, 1.0, [(2.0, 2.0)], 4)
    with pytest.raises(ParameterError):
        adaptive_pool_gamma(x, 1.0, [(6.0, 8.0)], 4)
