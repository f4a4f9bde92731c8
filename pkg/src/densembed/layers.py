"""Trainable density-embedding layers and the classifiers built from them.

Images are ``[batch, C, N, N]`` arrays. Logistic layers keep one receptive
field shared by every channel (``channel_mode="shared"``) or one per channel
(``"per-channel"``); with ``C == 1`` the two coincide.

Location/scale logits are stored as ``[C', B, B, 2]`` where ``C'`` is 1 for
shared fields and ``C`` otherwise. The last axis holds (column, row): entry
0 drives the density over columns ``n``, entry 1 the density over rows ``m``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .densities import SquashSpec, squash, squash_pair
from .gamma import adaptive_conv_gamma, adaptive_pool_gamma, logistic_gamma

NUM_CLASSES = 10
CHANNEL_MODES = ("shared", "per-channel")

# (mean, std) of the location and scale logits at initialization
ALPHA_INIT = (0.0, 0.4)
BETA_INIT = (-3.0, 0.3)


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float


@dataclass(frozen=True)
class FanIn:
    """Uniform on ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""

    fan_in: int


@dataclass(frozen=True)
class Constant:
    value: float


# -- logistic embedding ------------------------------------------------------

@dataclass
class LogisticELParams:
    alpha: Tensor
    beta: Tensor
    grid_size: int
    input_size: int
    squash_mu: SquashSpec
    squash_s: SquashSpec

    @property
    def field_channels(self) -> int:
        return self.alpha.shape[0]


def _factors(mu: Tensor, s: Tensor, n: int) -> tuple[Tensor, Tensor]:
    g = logistic_gamma(mu, s, n)
    return g[..., 0, :], g[..., 1, :]


def logistic_el_factors(params: LogisticELParams, alpha: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Column and row factors ``(Γt, Γu)`` of the separable Γ.

    ``alpha`` overrides the stored location logits; it may carry a leading
    batch axis, in which case the factors do too.
    """
    alpha = params.alpha if alpha is None else alpha
    mu = squash(alpha, params.squash_mu)
    s = squash(params.beta, params.squash_s)
    if alpha.ndim == params.beta.ndim + 1:
        s = ad.expand(s, alpha.shape, (0,))
    return _factors(mu, s, params.input_size)


def separable_apply(gt: Tensor, gu: Tensor, x) -> Tensor:
    """``R[b,c,i,j] = Σ_mn Γu[.,i,j,m] Γt[.,i,j,n] x[b,c,m,n]``.

    Factors are ``[C', B, B, N]`` or batched ``[batch, C', B, B, N]``;
    ``C' == 1`` shares the field across all input channels.
    """
    x = ad.as_tensor(x)
    if x.ndim != 4 or x.shape[2] != x.shape[3]:
        raise ad.ShapeError(f"expected images [batch, C, N, N], got {x.shape}")
    batched = gt.ndim == 5
    fc = gt.shape[1] if batched else gt.shape[0]
    if x.shape[-1] != gt.shape[-1]:
        raise ad.ShapeError(f"input size {x.shape[-1]} does not match Γ size {gt.shape[-1]}")
    if fc != 1 and fc != x.shape[1]:
        raise ad.ShapeError(f"{fc} receptive fields for {x.shape[1]} channels")
    if batched and gt.shape[0] != x.shape[0]:
        raise ad.ShapeError(f"batched Γ for {gt.shape[0]} items, input has {x.shape[0]}")
    if not batched:
        if fc == 1:
            g4 = ad.contract(gu[0], gt[0], "ijm,ijn->ijmn")
            return ad.contract(x, g4, "bcmn,ijmn->bcij")
        g4 = ad.contract(gu, gt, "cijm,cijn->cijmn")
        return ad.contract(x, g4, "bcmn,cijmn->bcij")
    if fc == 1:
        t = ad.contract(x, gt[:, 0], "bcmn,bijn->bcijm")
        return ad.contract(t, gu[:, 0], "bcijm,bijm->bcij")
    t = ad.contract(x, gt, "bcmn,bcijn->bcijm")
    return ad.contract(t, gu, "bcijm,bcijm->bcij")


def logistic_el_forward(params: LogisticELParams, x) -> Tensor:
    """Pool ``x`` ([C,N,N] or [batch,C,N,N]) through B×B logistic densities."""
    x = ad.as_tensor(x)
    single = x.ndim == 3
    if single:
        x = ad.reshape(x, (1,) + x.shape)
    if x.ndim != 4 or x.shape[-1] != params.input_size:
        raise ad.ShapeError(f"expected spatial size {params.input_size}, got {x.shape}")
    gt, gu = logistic_el_factors(params)
    out = separable_apply(gt, gu, x)
    return ad.reshape(out, out.shape[1:]) if single else out


@dataclass
class MicroNetParams:
    inner: LogisticELParams
    weight: Tensor
    bias: Tensor
    outer_beta: Tensor
    grid_size: int

    @property
    def outer(self) -> LogisticELParams:
        """Outer layer with α left at zero (its α comes from the micro network)."""
        return LogisticELParams(Tensor(np.zeros(self.outer_beta.shape)), self.outer_beta, self.grid_size,
                                self.inner.input_size, self.inner.squash_mu, self.inner.squash_s)


def micro_net_alpha(params: MicroNetParams, x: Tensor) -> Tensor:
    """Location logits ``α(x; W)`` with shape ``[batch, C', B, B, 2]``."""
    feats = logistic_el_forward(params.inner, x)
    flat = ad.reshape(feats, (feats.shape[0], -1))
    if flat.shape[1] != params.weight.shape[0]:
        raise ad.ShapeError(f"micro network expects {params.weight.shape[0]} features, got {flat.shape[1]}")
    lin = ad.add(ad.contract(flat, params.weight, "bf,fo->bo"),
                 ad.expand(params.bias, (flat.shape[0], params.bias.shape[0]), (0,)))
    return ad.reshape(lin, (flat.shape[0],) + params.outer_beta.shape)


def micro_net_forward(params: MicroNetParams, x) -> Tensor:
    """Logistic-EL whose locations are predicted from the input itself."""
    x = ad.as_tensor(x)
    single = x.ndim == 3
    if single:
        x = ad.reshape(x, (1,) + x.shape)
    alpha = micro_net_alpha(params, x)
    gt, gu = logistic_el_factors(params.outer, alpha)
    out = separable_apply(gt, gu, x)
    return ad.reshape(out, out.shape[1:]) if single else out


# -- 1D adaptive layers ------------------------------------------------------

@dataclass
class AdaptiveConv1d:
    """Sliding window whose span (kernel amplitude) is learned.

    With ``bounds=(a, b)`` the amplitude is ``a + (b - a) * sigmoid(lam)``;
    without bounds ``lam`` is the amplitude itself.
    """

    kernel: int
    stride: int
    n_cells: int
    lam: Tensor
    bounds: tuple[float, float] | None = None
    normalize: bool = False

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1 or self.kernel > self.n_cells:
            raise ValueError(f"invalid adaptive conv: K={self.kernel}, S={self.stride}, N={self.n_cells}")
        if self.bounds is not None and not 0 < self.bounds[0] < self.bounds[1]:
            raise ValueError(f"amplitude bounds must satisfy 0 < a < b, got {self.bounds}")

    @property
    def positions(self) -> int:
        return (self.n_cells - self.kernel) // self.stride + 1

    def amplitude(self) -> Tensor:
        if self.bounds is None:
            return self.lam
        a, b = self.bounds
        return ad.add(ad.scale(ad.sigmoid(self.lam), b - a), a)

    def gamma(self) -> Tensor:
        """Stacked window operators, ``[L, K, N]``."""
        p = self.amplitude()
        return ad.stack([adaptive_conv_gamma(self.n_cells, self.kernel, self.stride, l, p, self.normalize).entries
                         for l in range(1, self.positions + 1)])

    def __call__(self, x) -> Tensor:
        """Patches ``[..., L, K]`` of a signal ``[N]`` or ``[batch, N]``."""
        x = ad.as_tensor(x)
        g = self.gamma()
        if x.ndim == 1:
            return ad.contract(g, x, "lkn,n->lk")
        return ad.contract(x, g, "bn,lkn->blk")


@dataclass
class AdaptivePool1d:
    """Temperature pooling over intervals ``[c_i - w/2, c_i + w/2]``."""

    n_cells: int
    beta: Tensor
    centers: Tensor
    width: float

    def intervals(self) -> tuple[Tensor, Tensor]:
        half = 0.5 * self.width
        return ad.sub(self.centers, half), ad.add(self.centers, half)

    def gamma(self, x) -> Tensor:
        return adaptive_pool_gamma(x, self.beta, self.intervals(), self.n_cells).entries

    def __call__(self, x) -> Tensor:
        x = ad.as_tensor(x)
        g = self.gamma(x)
        if x.ndim == 1:
            return ad.contract(g, x, "in,n->i")
        return ad.contract(g, x, "bin,bn->bi")


def adaptive_layers_forward(layer, x) -> Tensor:
    return layer(x)


# -- classifiers -------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    out = ad.contract(x, weight, "bf,fo->bo")
    return ad.add(out, ad.expand(bias, out.shape, (0,)))


class Model:
    """A classifier: named parameter tensors plus a forward pass to logits."""

    kind = "model"

    def __init__(self, input_size: int, channels: int):
        self.input_size = int(input_size)
        self.channels = int(channels)
        self.params: dict[str, Tensor] = {}
        self.init_specs: dict[str, object] = {}

    def _param(self, name: str, shape: tuple[int, ...], init) -> None:
        self.params[name] = Tensor(np.zeros(shape), requires_grad=True)
        self.init_specs[name] = init

    def _head(self, features: int) -> None:
        self._param("head.weight", (features, NUM_CLASSES), FanIn(features))
        self._param("head.bias", (NUM_CLASSES,), FanIn(features))

    def set_parameters(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            if name not in self.params:
                raise KeyError(f"{self.kind} has no parameter {name!r}")
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != self.params[name].shape:
                raise ad.ShapeError(f"{name}: expected {self.params[name].shape}, got {arr.shape}")
            self.params[name] = Tensor(arr, requires_grad=True)

    def features(self, x) -> Tensor:
        raise NotImplementedError

    def forward(self, x) -> Tensor:
        feats = self.features(ad.as_tensor(x))
        flat = ad.reshape(feats, (feats.shape[0], -1))
        return linear(flat, self.params["head.weight"], self.params["head.bias"])

    __call__ = forward

    def config(self) -> dict:
        return {"input_size": self.input_size, "channels": self.channels}

    def _check_input(self, x: Tensor) -> None:
        want = (self.channels, self.input_size, self.input_size)
        if x.ndim != 4 or x.shape[1:] != want:
            raise ad.ShapeError(f"{self.kind} expects [batch, {want[0]}, {want[1]}, {want[2]}], got {x.shape}")


class FullyConnected(Model):
    def __init__(self, input_size: int = 28, channels: int = 1, hidden: int | None = None):
        super().__init__(input_size, channels)
        self.hidden = hidden
        self.kind = "fc0" if hidden is None else f"fc{hidden}"
        d = channels * input_size * input_size
        if hidden is None:
            self._head(d)
        else:
            self._param("hidden.weight", (d, hidden), FanIn(d))
            self._param("hidden.bias", (hidden,), FanIn(d))
            self._head(hidden)

    def features(self, x: Tensor) -> Tensor:
        self._check_input(x)
        flat = ad.reshape(x, (x.shape[0], -1))
        if self.hidden is None:
            return flat
        return ad.relu(linear(flat, self.params["hidden.weight"], self.params["hidden.bias"]))

    def config(self) -> dict:
        return {**super().config(), "hidden": self.hidden}


def _field_channels(mode: str, channels: int) -> int:
    if mode not in CHANNEL_MODES:
        raise ValueError(f"channel_mode must be one of {CHANNEL_MODES}, got {mode!r}")
    return 1 if mode == "shared" else channels


class LogisticEL(Model):
    kind = "logistic-el"

    def __init__(self, grid: int, input_size: int = 28, channels: int = 1, channel_mode: str = "per-channel",
                 squash_preset: str = "sigmoid"):
        super().__init__(input_size, channels)
        if grid < 1:
            raise ValueError(f"grid size B must be >= 1, got {grid}")
        self.grid = int(grid)
        self.channel_mode = channel_mode
        self.squash_preset = squash_preset
        self.squash_mu, self.squash_s = squash_pair(squash_preset, input_size)
        fc = _field_channels(channel_mode, channels)
        self._param("el.alpha", (fc, grid, grid, 2), Normal(*ALPHA_INIT))
        self._param("el.beta", (fc, grid, grid, 2), Normal(*BETA_INIT))
        self._head(channels * grid * grid)

    def el_params(self) -> LogisticELParams:
        return LogisticELParams(self.params["el.alpha"], self.params["el.beta"], self.grid, self.input_size,
                                self.squash_mu, self.squash_s)

    def features(self, x: Tensor) -> Tensor:
        self._check_input(x)
        return logistic_el_forward(self.el_params(), x)

    def config(self) -> dict:
        return {**super().config(), "B": self.grid, "channel_mode": self.channel_mode,
                "squash": self.squash_preset, "squash_mu": self.squash_mu.to_dict(),
                "squash_s": self.squash_s.to_dict()}


class LogisticELMicroNet(Model):
    kind = "logistic-el-mnn"

    def __init__(self, grid: int, inner_grid: int, input_size: int = 28, channels: int = 1,
                 channel_mode: str = "per-channel", squash_preset: str = "sigmoid"):
        super().__init__(input_size, channels)
        if grid < 1 or inner_grid < 1:
            raise ValueError(f"grid sizes must be >= 1, got B={grid}, B0={inner_grid}")
        self.grid, self.inner_grid = int(grid), int(inner_grid)
        self.channel_mode = channel_mode
        self.squash_preset = squash_preset
        self.squash_mu, self.squash_s = squash_pair(squash_preset, input_size)
        fc = _field_channels(channel_mode, channels)
        self._param("inner.alpha", (fc, inner_grid, inner_grid, 2), Normal(*ALPHA_INIT))
        self._param("inner.beta", (fc, inner_grid, inner_grid, 2), Normal(*BETA_INIT))
        n_feat = channels * inner_grid * inner_grid
        n_out = fc * grid * grid * 2
        self._param("mnn.weight", (n_feat, n_out), FanIn(n_feat))
        self._param("mnn.bias", (n_out,), FanIn(n_feat))
        self._param("outer.beta", (fc, grid, grid, 2), Normal(*BETA_INIT))
        self._head(channels * grid * grid)

    def mnn_params(self) -> MicroNetParams:
        inner = LogisticELParams(self.params["inner.alpha"], self.params["inner.beta"], self.inner_grid,
                                 self.input_size, self.squash_mu, self.squash_s)
        return MicroNetParams(inner, self.params["mnn.weight"], self.params["mnn.bias"],
                              self.params["outer.beta"], self.grid)

    def features(self, x: Tensor) -> Tensor:
        self._check_input(x)
        return micro_net_forward(self.mnn_params(), x)

    def config(self) -> dict:
        return {**super().config(), "B": self.grid, "B0": self.inner_grid, "channel_mode": self.channel_mode,
                "squash": self.squash_preset, "squash_mu": self.squash_mu.to_dict(),
                "squash_s": self.squash_s.to_dict()}


class AdaptivePoolDemo(Model):
    """Separable temperature pooling to a B×B grid (rows, then columns)."""

    kind = "adaptive-pool-demo"

    def __init__(self, grid: int = 7, input_size: int = 28, channels: int = 1):
        super().__init__(input_size, channels)
        self.grid = int(grid)
        self.width = input_size / grid
        centers = (np.arange(grid) + 0.5) * self.width
        self._param("pool.beta", (), Constant(0.0))
        self.params["pool.centers"] = Tensor(centers, requires_grad=True)
        self.init_specs["pool.centers"] = tuple(centers)
        self._head(channels * grid * grid)

    def pool(self) -> AdaptivePool1d:
        return AdaptivePool1d(self.input_size, self.params["pool.beta"], self.params["pool.centers"], self.width)

    def features(self, x: Tensor) -> Tensor:
        self._check_input(x)
        b, c, n, _ = x.shape
        pool = self.pool()
        cols = pool(ad.reshape(x, (b * c * n, n)))                      # [b*c*m, j]
        cols = ad.transpose(ad.reshape(cols, (b, c, n, self.grid)), (0, 1, 3, 2))
        rows = pool(ad.reshape(cols, (b * c * self.grid, n)))           # [b*c*j, i]
        return ad.transpose(ad.reshape(rows, (b, c, self.grid, self.grid)), (0, 1, 3, 2))

    def config(self) -> dict:
        return {**super().config(), "B": self.grid}


class AdaptiveConvDemo(Model):
    """Separable 2D convolution whose window span is learned, then ReLU."""

    kind = "adaptive-conv-demo"

    def __init__(self, kernel: int = 5, stride: int = 3, out_channels: int = 4, input_size: int = 28,
                 channels: int = 1):
        super().__init__(input_size, channels)
        self.kernel, self.stride, self.out_channels = int(kernel), int(stride), int(out_channels)
        self.bounds = (1.0, float(2 * kernel - 1))
        self._param("conv.lam", (), Constant(0.0))
        fan = channels * kernel * kernel
        self._param("conv.weight", (out_channels, channels, kernel, kernel), FanIn(fan))
        self._param("conv.bias", (out_channels,), FanIn(fan))
        pos = self.conv().positions
        self._head(out_channels * pos * pos)

    def conv(self) -> AdaptiveConv1d:
        return AdaptiveConv1d(self.kernel, self.stride, self.input_size, self.params["conv.lam"], self.bounds)

    def features(self, x: Tensor) -> Tensor:
        self._check_input(x)
        g = self.conv().gamma()                                         # [L, K, N]
        t = ad.contract(x, g, "bcmn,qkn->bcmqk")
        patches = ad.contract(t, g, "bcmqk,lpm->bclpqk")
        out = ad.contract(patches, self.params["conv.weight"], "bclpqk,ocpk->bolq")
        bias = ad.expand(self.params["conv.bias"], out.shape, (0, 2, 3))
        return ad.relu(ad.add(out, bias))

    def config(self) -> dict:
        return {**super().config(), "K": self.kernel, "S": self.stride, "out_channels": self.out_channels}


MODEL_NAMES = ("fc0", "fc50", "logistic-el", "logistic-el-mnn", "adaptive-pool-demo", "adaptive-conv-demo")


def build_model(name: str, input_size: int = 28, channels: int = 1, B: int | None = None, B0: int | None = None,
                channel_mode: str = "per-channel", squash_preset: str = "sigmoid", **extra) -> Model:
    if name == "fc0":
        return FullyConnected(input_size, channels)
    if name == "fc50":
        return FullyConnected(input_size, channels, hidden=50)
    if name == "logistic-el":
        if B is None:
            raise ValueError("logistic-el needs B")
        return LogisticEL(B, input_size, channels, channel_mode, squash_preset)
    if name == "logistic-el-mnn":
        if B is None or B0 is None:
            raise ValueError("logistic-el-mnn needs B and B0")
        return LogisticELMicroNet(B, B0, input_size, channels, channel_mode, squash_preset)
    if name == "adaptive-pool-demo":
        return AdaptivePoolDemo(B or 7, input_size, channels)
    if name == "adaptive-conv-demo":
        return AdaptiveConvDemo(input_size=input_size, channels=channels, **extra)
    raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")


def model_from_config(kind: str, config: dict) -> Model:
    cfg = dict(config)
    n, c = cfg.pop("input_size"), cfg.pop("channels")
    if kind in ("fc0", "fc50"):
        return build_model(kind, n, c)
    if kind == "logistic-el":
        return LogisticEL(cfg["B"], n, c, cfg["channel_mode"], cfg["squash"])
    if kind == "logistic-el-mnn":
        return LogisticELMicroNet(cfg["B"], cfg["B0"], n, c, cfg["channel_mode"], cfg["squash"])
    if kind == "adaptive-pool-demo":
        return AdaptivePoolDemo(cfg["B"], n, c)
    if kind == "adaptive-conv-demo":
        return AdaptiveConvDemo(cfg["K"], cfg["S"], cfg["out_channels"], n, c)
    raise ValueError(f"unknown model kind {kind!r}")


def param_count(model: Model) -> int:
    return int(sum(p.size for p in model.params.values()))
