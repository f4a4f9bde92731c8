"""Dataset-free invariant battery run by ``densembed verify``."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import gamma
from .densities import LogisticDensity, PiecewiseConstantDensity, logistic_pdf
from .layers import AdaptiveConv1d, AdaptivePool1d, build_model, param_count
from .quadrature import double_integral

MNIST_COUNTS = {  # MNIST, 28x28x1
    ("fc0", None, None): 7850, ("fc50", None, None): 39760,
    ("logistic-el", 3, None): 136, ("logistic-el", 5, None): 360,
    ("logistic-el", 8, None): 906, ("logistic-el", 15, None): 3160,
    ("logistic-el-mnn", 6, 3): 1198, ("logistic-el-mnn", 8, 4): 3018, ("logistic-el-mnn", 10, 5): 6510,
}
CIFAR10_COUNTS = {  # CIFAR-10, 32x32x3
    ("fc0", None, None): 30730, ("fc50", None, None): 154160,
    ("logistic-el", 3, None): 388, ("logistic-el", 5, None): 1060,
    ("logistic-el", 8, None): 2698, ("logistic-el", 15, None): 9460,
    ("logistic-el-mnn", 6, 3): 7462, ("logistic-el-mnn", 8, 4): 21322, ("logistic-el-mnn", 10, 5): 49510,
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def count_mismatches(table: dict, input_size: int, channels: int) -> list[str]:
    bad = []
    for (name, b, b0), want in table.items():
        got = param_count(build_model(name, input_size, channels, B=b, B0=b0))
        if got != want:
            bad.append(f"{name} B={b} B0={b0}: {got} != {want}")
    return bad


def check_param_counts() -> CheckResult:
    bad = count_mismatches(MNIST_COUNTS, 28, 1) + count_mismatches(CIFAR10_COUNTS, 32, 3)
    return CheckResult("parameter counts (MNIST and CIFAR-10 models)", not bad, "; ".join(bad) or "18/18 exact")


def check_recovery() -> CheckResult:
    n = 6
    ident = gamma.build_gamma_1d([PiecewiseConstantDensity(i - 1.0, float(i)) for i in range(1, n + 1)], n)
    ok = np.array_equal(ident.numpy(), np.eye(n))
    worst = 0.0
    for k, s in ((2, 2), (3, 1), (3, 2)):
        for l in range(1, (n - k) // s + 2):
            ref = gamma.conv_gamma(n, k, s, l).numpy()
            ada = gamma.adaptive_conv_gamma(n, k, s, l, float(k)).numpy()
            worst = max(worst, float(np.abs(ref - ada).max()))
    ok = ok and worst == 0.0
    return CheckResult("FC / conv recovery", ok, f"identity exact={np.array_equal(ident.numpy(), np.eye(n))}, "
                                                 f"conv max diff={worst:g}")


def check_pooling_limits() -> CheckResult:
    rng = np.random.default_rng(3)
    x = rng.permutation(np.arange(8) * 0.5) + 0.1
    intervals = [(0.0, 4.0), (4.0, 8.0), (1.5, 6.5)]
    errs = []
    for beta, target in ((0.0, None), (50.0, np.max), (-50.0, np.min)):
        g = gamma.adaptive_pool_gamma(x, beta, intervals, 8).numpy()
        out = g @ x
        for i, (lo, hi) in enumerate(intervals):
            cells = np.arange(8)
            m = np.clip(np.minimum(cells + 1, hi) - np.maximum(cells, lo), 0, None)
            ref = (m @ x) / m.sum() if target is None else target(x[m > 0])
            errs.append((beta, abs(out[i] - ref)))
    worst_mean = max(e for b, e in errs if b == 0.0)
    worst_lim = max(e for b, e in errs if b != 0.0)
    ok = worst_mean <= 1e-12 and worst_lim <= 1e-6
    return CheckResult("pooling limits", ok, f"mean err={worst_mean:.2e}, max/min err={worst_lim:.2e}")


def check_oracle(grids: int = 3, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(grids):
        b, n = int(rng.integers(1, 5)), int(rng.integers(4, 17))
        mu = rng.uniform(0, n, size=(b, b, 2))
        s = rng.uniform(0.3, n / 2, size=(b, b, 2))
        closed = gamma.logistic_gamma(mu, s, n).data
        for i in range(b):
            for j in range(b):
                for a in range(2):
                    num = gamma.build_gamma_numeric(lambda t, m=mu[i, j, a], sc=s[i, j, a]: logistic_pdf(t, m, sc),
                                                    n).numpy()[0]
                    worst = max(worst, float(np.abs(num - closed[i, j, a]).max()))
        i, j, m_, n_ = (int(v) for v in rng.integers(0, [b, b, n, n]))
        pdf2 = lambda t, u: logistic_pdf(t, mu[i, j, 0], s[i, j, 0]) * logistic_pdf(u, mu[i, j, 1], s[i, j, 1])
        num4 = double_integral(pdf2, n_, n_ + 1.0, m_, m_ + 1.0, 1e-9)
        worst = max(worst, abs(num4 - closed[i, j, 1, m_] * closed[i, j, 0, n_]))
    return CheckResult("closed form vs quadrature", worst <= 1e-6, f"max abs diff={worst:.2e}")


def _gradcheck(loss, params: dict[str, ad.Tensor]) -> float:
    ad.backward(loss(params))
    worst = 0.0
    for name, p in params.items():
        analytic = p.grad

        def f(v, name=name):
            trial = dict(params)
            trial[name] = ad.Tensor(v)
            return loss(trial).item()

        worst = max(worst, ad.relative_error(analytic, ad.numeric_gradient(f, p.data)))
    return worst


def check_gradients(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    n = 8
    x = rng.uniform(0, 1, size=(2, 1, n, n))
    labels = np.array([1, 3])
    worst = {}
    for name, kw in (("logistic-el", dict(B=3)), ("logistic-el-mnn", dict(B=3, B0=2))):
        model = build_model(name, n, 1, **kw)
        for pname, p in model.params.items():
            model.params[pname] = ad.Tensor(rng.normal(0, 0.5, p.shape), requires_grad=True)

        def loss(ps, model=model):
            model.params = ps
            return ad.softmax_cross_entropy(model(x), labels)

        worst[name] = _gradcheck(loss, dict(model.params))

    sig = rng.uniform(0, 1, n)
    w = rng.normal(size=3)

    def pool_loss(ps):
        layer = AdaptivePool1d(n, ps["beta"], ps["centers"], 2.5)
        return ad.tsum(ad.mul(layer(sig), w))

    worst["adaptive-pool"] = _gradcheck(pool_loss, {"beta": ad.Tensor(0.7, requires_grad=True),
                                                    "centers": ad.Tensor([1.3, 4.1, 6.6], requires_grad=True)})
    kw = rng.normal(size=(2, 3))

    def conv_loss(ps):
        layer = AdaptiveConv1d(3, 2, n, ps["p"])
        return ad.tsum(ad.mul(layer(sig)[:2], kw))

    worst["adaptive-conv"] = _gradcheck(conv_loss, {"p": ad.Tensor(2.37, requires_grad=True)})
    ok = all(v < 1e-5 for v in worst.values())
    return CheckResult("gradient audit", ok, ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


CHECKS = (check_param_counts, check_recovery, check_pooling_limits, check_oracle, check_gradients)


def run_all() -> tuple[list[CheckResult], float]:
    t0 = time.perf_counter()
    results = []
    for check in CHECKS:
        try:
            results.append(check())
        except Exception as exc:  # a crashing check is a failing check
            results.append(CheckResult(check.__name__, False, f"{type(exc).__name__}: {exc}"))
    return results, time.perf_counter() - t0
