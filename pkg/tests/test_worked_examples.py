"""Small hand-checkable cases for each component, plus the limits they must obey."""
import math

import numpy as np
import pytest
from scipy.special import logit

from densembed import autodiff as ad
from densembed import cli
from densembed.data import Dataset, batch_indices, load_mnist
from densembed.densities import (
    LogisticDensity, PiecewiseConstantDensity, SquashSpec, interval_mass, logistic_cdf, squash, squash_pair,
)
from densembed.gamma import (
    adaptive_conv_gamma, adaptive_pool_gamma, build_gamma_1d, build_gamma_2d_separable, build_gamma_numeric,
    conv_gamma, logistic_gamma,
)
from densembed.layers import (
    AdaptivePool1d, LogisticELParams, MicroNetParams, build_model, logistic_el_forward, micro_net_forward,
)
from densembed.render import receptive_field
from densembed.train import AdamState, adam_step, evaluate, fit, init_params, TrainConfig
from conftest import write_fake_mnist

TANH1 = 1 / (1 + math.exp(-2)) - 1 / (1 + math.exp(2))  # 0.761594...


def test_cdf_cases():
    assert logistic_cdf(3.7, 3.7, 0.4).item() == 0.5
    assert logistic_cdf(2.0, 0.0, 1.0).item() == pytest.approx(0.880797, abs=1e-6)
    got = interval_mass(LogisticDensity(0.5, 0.25), 0.0, 1.0).item()
    assert got == pytest.approx(0.761594, abs=1e-6) and got == pytest.approx(TANH1, abs=1e-15)


def test_interval_mass_cases():
    assert interval_mass(LogisticDensity(0.0, 1.0), 1.2, 1.2).item() == 0.0
    assert interval_mass(PiecewiseConstantDensity(0.5, 2.0), 0.0, 1.0).item() == 0.5
    assert interval_mass(LogisticDensity(0.0, 1.0), -50.0, 50.0).item() == pytest.approx(1.0, abs=1e-9)


def test_squash_cases():
    spec = SquashSpec(4.0, 0.0, 28.0)
    assert squash(0.0, spec).item() == 14.0
    assert squash(1e3, spec).item() == 28.0
    assert squash(0.0, SquashSpec(0.0, 1.0, 28.0)).item() == 15.0


def test_gamma_1d_cases():
    assert np.array_equal(build_gamma_1d([PiecewiseConstantDensity(i - 1.0, float(i)) for i in (1, 2, 3)], 3).numpy(),
                          np.eye(3))
    row = build_gamma_1d([LogisticDensity(14.0, 15.0)], 28).numpy()[0]
    want = logistic_cdf(28.0, 14.0, 15.0).item() - logistic_cdf(0.0, 14.0, 15.0).item()
    assert row.sum() == pytest.approx(want, abs=1e-14)
    assert build_gamma_1d([LogisticDensity(0.5, 0.25)], 1).numpy()[0, 0] == pytest.approx(TANH1, abs=1e-15)


def test_gamma_2d_cases():
    cell = [[PiecewiseConstantDensity(0.0, 1.0)]]
    g = build_gamma_2d_separable(cell, cell, 3).numpy()
    want = np.zeros((1, 1, 3, 3))
    want[0, 0, 0, 0] = 1.0
    assert np.array_equal(g, want)

    rng = np.random.default_rng(0)
    mu, s = rng.uniform(0, 28, (5, 5, 2)), rng.uniform(0.5, 10, (5, 5, 2))
    f = [[LogisticDensity(mu[i, j, 0], s[i, j, 0]) for j in range(5)] for i in range(5)]
    h = [[LogisticDensity(mu[i, j, 1], s[i, j, 1]) for j in range(5)] for i in range(5)]
    g2 = build_gamma_2d_separable(f, h, 28).numpy()
    gt = build_gamma_1d([d for r in f for d in r], 28).numpy().reshape(5, 5, 28)
    gu = build_gamma_1d([d for r in h for d in r], 28).numpy().reshape(5, 5, 28)
    assert np.array_equal(g2, gu[..., :, None] * gt[..., None, :])

    closed = logistic_gamma(mu, s, 28).data
    from densembed.densities import logistic_pdf
    pdfs = [lambda t, m=m, sc=sc: logistic_pdf(t, m, sc) for m, sc in zip(mu.ravel(), s.ravel())]
    numeric = build_gamma_numeric(pdfs, 28).numpy().reshape(closed.shape)
    assert np.abs(numeric - closed).max() < 1e-6


def test_numeric_gamma_cases():
    box = lambda t: np.where((t >= 1) & (t <= 2), 1.0, 0.0)
    np.testing.assert_allclose(build_gamma_numeric(box, 3, breakpoints=(1.0, 2.0)).numpy()[0], [0, 1, 0], atol=1e-9)
    from densembed.densities import logistic_pdf
    assert build_gamma_numeric(lambda t: logistic_pdf(t, 0.5, 0.25), 1).numpy()[0, 0] == pytest.approx(TANH1, abs=1e-8)
    tri = lambda t: np.where((t >= 0) & (t <= 2), t / 2, 0.0)
    np.testing.assert_allclose(build_gamma_numeric(tri, 2).numpy()[0], [0.25, 0.75], atol=1e-12)


def test_conv_cases():
    g1, g2 = conv_gamma(4, 2, 2, 1).numpy(), conv_gamma(4, 2, 2, 2).numpy()
    assert g1.tolist() == [[1, 0, 0, 0], [0, 1, 0, 0]]
    assert g2.tolist() == [[0, 0, 1, 0], [0, 0, 0, 1]]
    assert all((r == 1).sum() == 1 and r.sum() == 1 for r in np.vstack([g1, g2]))


def test_adaptive_conv_cases():
    g = adaptive_conv_gamma(4, 2, 1, 1, 1.0).numpy()
    assert g.tolist() == [[0.5, 0, 0, 0], [0.5, 0, 0, 0]]
    g = adaptive_conv_gamma(20, 3, 2, 4, 5.3).numpy()
    np.testing.assert_allclose(g.sum(axis=1), 5.3 / 3, atol=1e-14)


def test_adaptive_pool_cases():
    x = np.array([0.0, 1.0])
    g = adaptive_pool_gamma(x, 0.0, [(0.0, 2.0)], 2)
    assert g.numpy().tolist() == [[0.5, 0.5]] and g.apply(x).item() == 0.5
    np.testing.assert_allclose(adaptive_pool_gamma(x, math.log(3), [(0.0, 2.0)], 2).numpy(), [[0.25, 0.75]],
                               atol=1e-15)
    x = np.array([1.0, 3.0])
    assert adaptive_pool_gamma(x, 50.0, [(0.0, 2.0)], 2).apply(x).item() == pytest.approx(3.0, abs=1e-8)


def _el(alpha, beta, n):
    mu_spec, s_spec = squash_pair("sigmoid", n)
    return LogisticELParams(ad.Tensor(alpha), ad.Tensor(beta), alpha.shape[1], n, mu_spec, s_spec)


def test_constant_image_is_reproduced():
    n = 28
    rng = np.random.default_rng(1)
    mu = rng.uniform(10, 18, (1, 3, 3, 2))  # masses well inside [0, N]
    params = _el(logit(mu / n), np.full((1, 3, 3, 2), logit(0.5 / n)), n)
    out = logistic_el_forward(params, np.full((1, n, n), 0.37)).data
    np.testing.assert_allclose(out, 0.37, atol=1e-6)


def test_dirac_limit_picks_a_pixel():
    n = 6
    x = np.random.default_rng(2).uniform(size=(1, n, n))
    mu = np.array([[[[4.5, 2.5]]]])  # column centre 4.5, row centre 2.5
    params = _el(logit(mu / n), np.full((1, 1, 1, 2), logit(1e-3 / n)), n)
    assert logistic_el_forward(params, x).data[0, 0, 0] == pytest.approx(x[0, 2, 4], abs=1e-12)


def test_micro_net_degenerate_and_nonlinear():
    model = build_model("logistic-el-mnn", 10, 1, B=3, B0=2)
    init_params(model, 0)
    mp = model.mnn_params()
    zero = MicroNetParams(mp.inner, ad.Tensor(np.zeros(mp.weight.shape)), ad.Tensor(np.zeros(mp.bias.shape)),
                          mp.outer_beta, mp.grid_size)
    x = np.random.default_rng(3).uniform(size=(1, 10, 10))
    # same value, different summation order (per-item vs shared Γ): agree to rounding
    np.testing.assert_allclose(micro_net_forward(zero, x).data, logistic_el_forward(zero.outer, x).data,
                               rtol=0, atol=1e-15)

    rng = np.random.default_rng(4)
    model.set_parameters({"mnn.weight": rng.normal(0, 1, mp.weight.shape)})
    mp = model.mnn_params()
    x1, x2 = rng.uniform(size=(2, 1, 10, 10))
    f = lambda v: micro_net_forward(mp, v).data
    assert np.abs(f(x1 + x2) - (f(x1) + f(x2))).max() > 1e-6


def test_pool_layer_cases():
    x = np.arange(8, dtype=np.float64) ** 2
    layer = AdaptivePool1d(8, ad.Tensor(0.0), ad.Tensor([1.0, 3.0, 5.0, 7.0]), 2.0)
    np.testing.assert_allclose(layer(x).data, x.reshape(4, 2).mean(axis=1), atol=1e-12)
    # d/dbeta at 0: sum m x (x - mean) / sum m
    beta = ad.Tensor(0.0, requires_grad=True)
    ad.backward(AdaptivePool1d(8, beta, ad.Tensor([2.5]), 3.0)(x)[0])
    m = np.clip(np.minimum(np.arange(8) + 1, 4.0) - np.maximum(np.arange(8), 1.0), 0, None)
    mean = m @ x / m.sum()
    assert beta.grad == pytest.approx(m @ (x * (x - mean)) / m.sum(), rel=1e-12)


def test_batching_cases():
    assert [len(b) for b in batch_indices(10, 4, seed=0)] == [4, 4, 2]
    assert np.concatenate(list(batch_indices(10, 4, shuffle=False))).tolist() == list(range(10))
    a = np.concatenate(list(batch_indices(10, 4, seed=9)))
    assert a.tolist() == np.concatenate(list(batch_indices(10, 4, seed=9))).tolist()


def test_init_sample_means():
    model = init_params(build_model("logistic-el", 28, 1, B=50), 3)  # 5000 alpha and 5000 beta draws
    assert abs(model.params["el.alpha"].data.mean()) < 0.02
    assert abs(model.params["el.beta"].data.mean() + 3) < 0.02


def test_adam_zero_gradient_leaves_parameters():
    p = {"w": ad.Tensor([1.5, -2.0])}
    assert adam_step(AdamState(), p, {"w": np.zeros(2)}, 0.1)["w"].data.tolist() == [1.5, -2.0]


def test_evaluate_ignores_batch_size(tmp_path):
    _, test = load_mnist(write_fake_mnist(tmp_path, 10, 37))
    model = init_params(build_model("logistic-el", 28, 1, B=3), 0)
    assert len({evaluate(model, test, bs) for bs in (1, 5, 37, 1000)}) == 1


def test_constant_predictor_error(mnist_dir):
    _, test = load_mnist(mnist_dir)
    model = build_model("fc0")
    bias = np.zeros(10)
    bias[1] = 1.0
    model.set_parameters({"head.weight": np.zeros((784, 10)), "head.bias": bias})
    share = np.mean(test.labels == 1) * 100
    assert evaluate(model, test) == pytest.approx(100 - share, abs=1e-12)
    assert evaluate(model, test) == pytest.approx(88.65, abs=1e-12)


def test_render_fresh_init_is_centred():
    field = receptive_field(init_params(build_model("logistic-el", 28, 1, B=8), 0))[0]
    rows, cols = np.indices(field.shape) + 0.5
    com = (float((field * rows).sum() / field.sum()), float((field * cols).sum() / field.sum()))
    assert abs(com[0] - 14) < 1.5 and abs(com[1] - 14) < 1.5


def test_render_single_sharp_density_peaks_at_location():
    model = build_model("logistic-el", 12, 1, B=1)
    mu = np.array([7.5, 3.5])  # (column, row) locations
    model.set_parameters({"el.alpha": logit(mu / 12).reshape(1, 1, 1, 2),
                          "el.beta": np.full((1, 1, 1, 2), logit(0.05 / 12))})
    field = receptive_field(model)[0]
    assert np.unravel_index(field.argmax(), field.shape) == (3, 7)


def test_render_micro_net_field_follows_the_input(tmp_path):
    train, test = load_mnist(write_fake_mnist(tmp_path, 64, 10))
    model = build_model("logistic-el-mnn", B=4, B0=2)
    fit(model, train, test, TrainConfig(epochs=1))
    a, b = receptive_field(model, test.take(0)[0]), receptive_field(model, test.take(3)[0])
    assert np.abs(a - b).max() > 0


def test_bench_reports_each_repeat(capsys, fake_mnist):
    assert cli.main(["bench", "--model", "fc0", "--data-dir", str(fake_mnist)]) == 0
    out = capsys.readouterr().out
    assert out.count("  repeat ") == 3 and "over 3 repeats" in out and "fc0" in out


def test_verify_is_fast(capsys):
    import time
    t0 = time.perf_counter()
    assert cli.main(["verify"]) == 0
    assert time.perf_counter() - t0 < 60
