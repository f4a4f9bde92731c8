"""Density families that expose interval masses in closed form.

Γ only ever needs the mass a density puts on a cell, so a density here is
anything with ``interval_mass(a, b)``. Parameters may be plain floats or
:class:`~densembed.autodiff.Tensor` values; masses stay differentiable in
whatever was passed as a tensor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class ParameterError(ValueError):
    """Invalid density parameters (non-positive scale, empty interval, ...)."""


def _value(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _bcast(x, shape):
    """Lift a scalar (float or 0-d tensor) to ``shape`` so ops see equal shapes."""
    x = ad.as_tensor(x)
    if x.shape == tuple(shape):
        return x
    if x.ndim != 0:
        raise ad.ShapeError(f"cannot lift {x.shape} to {shape}")
    return ad.expand(x, shape, tuple(range(len(shape))))


def logistic_cdf(t, mu, s) -> Tensor:
    """``F(t; mu, s) = 1 / (1 + exp(-(t - mu) / s))``.

    ``t``, ``mu`` and ``s`` must have equal shapes or be scalars.
    """
    if np.any(_value(s) <= 0):
        raise ParameterError("logistic scale s must be positive")
    z = ad.div(ad.sub(t, mu), s)
    return ad.sigmoid(z)


def logistic_pdf(t, mu, s) -> np.ndarray:
    """Pointwise density (plain numpy, not differentiable)."""
    t, mu, s = _value(t), _value(mu), _value(s)
    z = -np.abs((t - mu) / s)
    e = np.exp(z)
    return e / (s * (1.0 + e) ** 2)


def overlap_length(a1, b1, a2, b2) -> Tensor:
    """Length of ``[a1, b1] ∩ [a2, b2]``: ``max(0, min(b1, b2) - max(a1, a2))``."""
    return ad.maximum(ad.sub(ad.minimum(b1, b2), ad.maximum(a1, a2)), 0.0)


@dataclass(frozen=True)
class LogisticDensity:
    mu: float | Tensor
    s: float | Tensor

    def __post_init__(self):
        if np.any(_value(self.s) <= 0):
            raise ParameterError(f"logistic scale must be positive, got {_value(self.s)}")

    def cdf(self, t) -> Tensor:
        return logistic_cdf(t, self.mu, self.s)

    def pdf(self, t) -> np.ndarray:
        return logistic_pdf(t, self.mu, self.s)

    def interval_mass(self, a, b) -> Tensor:
        return ad.sub(self.cdf(b), self.cdf(a))


@dataclass(frozen=True)
class PiecewiseConstantDensity:
    """Indicator of ``[a, b]``; divided by ``b - a`` when ``normalized``."""

    a: float | Tensor
    b: float | Tensor
    normalized: bool = False

    def __post_init__(self):
        if np.any(_value(self.b) - _value(self.a) <= 0):
            raise ParameterError(f"interval [{_value(self.a)}, {_value(self.b)}] must have a < b")

    def pdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        a, b = _value(self.a), _value(self.b)
        height = 1.0 / (b - a) if self.normalized else 1.0
        return np.where((t >= a) & (t <= b), height, 0.0)

    def interval_mass(self, a, b) -> Tensor:
        m = overlap_length(a, b, self.a, self.b)
        if self.normalized:
            m = ad.div(m, ad.sub(self.b, self.a))
        return m


def interval_mass(density, a, b) -> Tensor:
    """Mass of ``density`` on ``[a, b]``."""
    if np.any(_value(a) > _value(b)):
        raise ValueError(f"interval_mass needs a <= b, got a={_value(a)}, b={_value(b)}")
    return density.interval_mass(a, b)


@dataclass(frozen=True)
class SquashSpec:
    """Bounded reparameterization ``q + range * sigmoid(p * z)``."""

    p: float
    q: float
    range: float

    def with_range(self, n: float) -> SquashSpec:
        return SquashSpec(self.p, self.q, float(n))

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "range": self.range}


def squash(z, spec: SquashSpec) -> Tensor:
    z = ad.as_tensor(z)
    return ad.add(ad.scale(ad.sigmoid(ad.scale(z, spec.p)), spec.range), spec.q)


# (p, q) pairs; the range is the input size N and is filled in per layer.
SQUASH_PRESETS: dict[str, tuple[tuple[float, float], tuple[float, float]]] = {
    # steep location; scale slope 0 freezes s at 1 + N/2
    "fixed-scale": ((4.0, 0.0), (0.0, 1.0)),
    # location and scale both N * sigmoid(z)
    "sigmoid": ((1.0, 0.0), (1.0, 0.0)),
    # steep location, plain sigmoid scale
    "steep-location": ((4.0, 0.0), (1.0, 0.0)),
}


def squash_pair(preset: str, n: float) -> tuple[SquashSpec, SquashSpec]:
    try:
        (pm, qm), (ps, qs) = SQUASH_PRESETS[preset]
    except KeyError:
        raise ParameterError(f"unknown squash preset {preset!r}; choose from {sorted(SQUASH_PRESETS)}") from None
    return SquashSpec(pm, qm, float(n)), SquashSpec(ps, qs, float(n))
