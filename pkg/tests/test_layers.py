import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from densembed import autodiff as ad
from densembed.densities import squash_pair
from densembed.layers import (
    MODEL_NAMES, AdaptiveConv1d, AdaptivePool1d, LogisticELParams, build_model, logistic_el_forward,
    model_from_config, param_count,
)
from densembed.verify import MNIST_COUNTS, CIFAR10_COUNTS

def _oracle_el(alpha, beta, x):
    """Direct numpy evaluation of the logistic embedding with the 'sigmoid' squash."""
    n = x.shape[-1]
    mu, s = n * expit(alpha), n * expit(beta)
    edges = np.arange(n + 1, dtype=np.float64)
    cdf = expit((edges - mu[..., None]) / s[..., None])
    g = np.diff(cdf, axis=-1)  # [C', B, B, 2, N]
    gt, gu = g[..., 0, :], g[..., 1, :]
    full = gu[..., :, None] * gt[..., None, :]  # [C', B, B, m, n]
    if full.shape[0] == 1:
        full = np.broadcast_to(full, (x.shape[1],) + full.shape[1:])
    return np.einsum("bcmn,cijmn->bcij", x, full)


@pytest.mark.parametrize("key", list(MNIST_COUNTS))
def test_mnist_parameter_counts(key):
    name, b, b0 = key
    assert param_count(build_model(name, 28, 1, B=b, B0=b0)) == MNIST_COUNTS[key]


@pytest.mark.parametrize("key", list(CIFAR10_COUNTS))
def test_cifar_parameter_counts(key):
    name, b, b0 = key
    assert param_count(build_model(name, 32, 3, B=b, B0=b0)) == CIFAR10_COUNTS[key]


def test_shared_fields_have_fewer_parameters():
    shared = build_model("logistic-el", 32, 3, B=8, channel_mode="shared")
    assert param_count(shared) == 2 * 8 * 8 * 2 + 3 * 64 * 10 + 10


@given(st.integers(1, 3), st.integers(1, 4), st.integers(3, 9), st.booleans(), st.integers(0, 2 ** 31))
@settings(max_examples=30)
def test_logistic_el_matches_direct_oracle(channels, b, n, shared, seed):
    rng = np.random.default_rng(seed)
    fc = 1 if shared else channels
    alpha, beta = rng.normal(0, 1, (fc, b, b, 2)), rng.normal(-1, 0.5, (fc, b, b, 2))
    x = rng.uniform(0, 1, (2, channels, n, n))
    mu_spec, s_spec = squash_pair("sigmoid", n)
    params = LogisticELParams(ad.Tensor(alpha), ad.Tensor(beta), b, n, mu_spec, s_spec)
    got = logistic_el_forward(params, x).data
    np.testing.assert_allclose(got, _oracle_el(alpha, beta, x), atol=1e-13)
    single = logistic_el_forward(params, x[1]).data
    np.testing.assert_allclose(single, got[1], atol=1e-14)


def test_micro_net_with_zero_weights_is_plain_el():
    m = build_model("logistic-el-mnn", 8, 1, B=3, B0=2)
    rng = np.random.default_rng(0)
    m.set_parameters({k: rng.normal(size=v.shape) for k, v in m.params.items()})
    m.set_parameters({"mnn.weight": np.zeros(m.params["mnn.weight"].shape)})
    x = rng.uniform(size=(2, 1, 8, 8))
    alpha = m.params["mnn.bias"].data.reshape(m.params["outer.beta"].shape)
    want = _oracle_el(alpha, m.params["outer.beta"].data, x)
    np.testing.assert_allclose(m.features(ad.Tensor(x)).data, want, atol=1e-13)


def test_micro_net_field_depends_on_input():
    m = build_model("logistic-el-mnn", 8, 1, B=3, B0=2)
    rng = np.random.default_rng(1)
    m.set_parameters({k: rng.normal(size=v.shape) for k, v in m.params.items()})
    x = rng.uniform(size=(2, 1, 8, 8))
    both = m.features(ad.Tensor(x)).data
    np.testing.assert_allclose(m.features(ad.Tensor(x[:1])).data[0], both[0], atol=1e-14)
    assert not np.allclose(both[0] / x[0].sum(), both[1] / x[1].sum())


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_forward_shapes_and_config_roundtrip(name):
    m = build_model(name, 28, 1, B=4, B0=2)
    x = np.random.default_rng(0).uniform(size=(3, 1, 28, 28))
    assert m(x).shape == (3, 10)
    clone = model_from_config(m.kind, m.config())
    assert param_count(clone) == param_count(m)


def test_bad_input_shape_is_reported():
    m = build_model("logistic-el", 28, 1, B=3)
    with pytest.raises(ad.ShapeError):
        m(np.zeros((2, 1, 27, 27)))
    with pytest.raises(ValueError):
        build_model("logistic-el", 28, 1)
    with pytest.raises(ValueError):
        build_model("resnet", 28, 1)


def test_set_parameters_checks_names_and_shapes():
    m = build_model("fc0")
    with pytest.raises(KeyError):
        m.set_parameters({"nope": np.zeros(1)})
    with pytest.raises(ad.ShapeError):
        m.set_parameters({"head.bias": np.zeros(3)})


@pytest.mark.parametrize("k,s,n", [(3, 1, 10), (3, 2, 11), (4, 3, 16)])
def test_adaptive_conv_at_kernel_size_is_plain_patches(k, s, n):
    x = np.random.default_rng(k).normal(size=n)
    layer = AdaptiveConv1d(k, s, n, ad.Tensor(float(k)))
    want = np.stack([x[l * s:l * s + k] for l in range(layer.positions)])
    np.testing.assert_array_equal(layer(x).data, want)


def test_adaptive_conv_bounded_amplitude():
    layer = AdaptiveConv1d(3, 1, 10, ad.Tensor(0.0), bounds=(1.0, 5.0))
    assert layer.amplitude().item() == 3.0
    with pytest.raises(ValueError):
        AdaptiveConv1d(3, 1, 10, ad.Tensor(0.0), bounds=(0.0, 5.0))


def test_adaptive_pool_layer_mean_at_zero_temperature():
    x = np.arange(10, dtype=np.float64)
    layer = AdaptivePool1d(10, ad.Tensor(0.0), ad.Tensor([2.0, 7.0]), 4.0)
    np.testing.assert_allclose(layer(x).data, [1.5, 6.5], atol=1e-12)
    np.testing.assert_allclose(layer(np.stack([x, -x])).data, [[1.5, 6.5], [-1.5, -6.5]], atol=1e-12)
