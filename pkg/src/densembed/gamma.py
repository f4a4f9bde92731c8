"""Assembly of the receptive-field operator Γ.

Cells are ``I_n = [n-1, n]`` for ``n = 1..N`` and ``Γ[i, n-1]`` is the mass
density ``i`` puts on ``I_n``. Images use a separable 4-tensor indexed
``Γ[i, j, m, n]`` where ``m`` is the row (paired with the ``u`` density) and
``n`` the column (paired with the ``t`` density).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .densities import ParameterError, overlap_length
from .quadrature import cell_integrals, double_integral

PROVENANCES = ("fixed", "parametric", "input-dependent")


@dataclass(frozen=True)
class GammaOperator:
    entries: Tensor
    order: int
    provenance: str = "fixed"

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ValueError(f"Γ order must be 2 or 4, got {self.order}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.entries.ndim < self.order:
            raise ad.ShapeError(f"order-{self.order} Γ needs at least {self.order} axes, got {self.entries.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.entries.shape

    def numpy(self) -> np.ndarray:
        return self.entries.data

    def apply(self, x) -> Tensor:
        """``R(x) = Γ x``; ``x`` is ``[N]`` / ``[N, N]`` for a single Γ or batched like Γ."""
        x = ad.as_tensor(x)
        batched = self.entries.ndim > self.order
        if self.order == 2:
            return ad.contract(self.entries, x, "bin,bn->bi" if batched else "in,n->i")
        return ad.contract(self.entries, x, "bijmn,bmn->bij" if batched else "ijmn,mn->ij")


def _check_cells(n_cells: int) -> int:
    if int(n_cells) != n_cells or n_cells < 1:
        raise ValueError(f"number of cells must be a positive integer, got {n_cells}")
    return int(n_cells)


def _edges(n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(1, n_cells + 1, dtype=np.float64)
    return n - 1.0, n


def _provenance(*values) -> str:
    return "parametric" if any(isinstance(v, Tensor) and v.requires_grad for v in values) else "fixed"


def logistic_gamma(mu, s, n_cells: int) -> Tensor:
    """Cell masses of logistic densities with arbitrary leading shape.

    ``mu`` and ``s`` share a shape ``S``; the result has shape ``S + (N,)``
    with entries ``F(n) - F(n-1)``.
    """
    n_cells = _check_cells(n_cells)
    mu, s = ad.as_tensor(mu), ad.as_tensor(s)
    if mu.shape != s.shape:
        raise ad.ShapeError(f"mu {mu.shape} and s {s.shape} must match")
    if np.any(s.data <= 0):
        raise ParameterError("logistic scale s must be positive")
    full = mu.shape + (n_cells + 1,)
    grid = np.broadcast_to(np.arange(n_cells + 1, dtype=np.float64), full)
    mu_e = ad.expand(mu, full, (-1,))
    s_e = ad.expand(s, full, (-1,))
    cdf = ad.sigmoid(ad.div(ad.sub(grid, mu_e), s_e))
    return ad.sub(cdf[..., 1:], cdf[..., :-1])


def build_gamma_1d(densities, n_cells: int) -> GammaOperator:
    """One row per density, ``Γ[i, n-1] = mass of density i on [n-1, n]``."""
    n_cells = _check_cells(n_cells)
    if len(densities) == 0:
        raise ValueError("need at least one density")
    lo, hi = _edges(n_cells)
    rows = [d.interval_mass(lo, hi) for d in densities]
    params = [v for d in densities for v in vars(d).values()]
    return GammaOperator(ad.stack(rows, axis=0), 2, _provenance(*params))


def _grid_shape(grid) -> tuple[int, int]:
    rows = len(grid)
    cols = {len(r) for r in grid}
    if rows == 0 or len(cols) != 1:
        raise ValueError("density grid must be a non-empty rectangular B×B nested list")
    (c,) = cols
    return rows, c


def build_gamma_2d_separable(f_densities, g_densities, n_cells: int) -> GammaOperator:
    """``Γ[i,j,m,n] = Γu[i,j,m] * Γt[i,j,n]`` from column (f) and row (g) densities."""
    shape_f, shape_g = _grid_shape(f_densities), _grid_shape(g_densities)
    if shape_f != shape_g or shape_f[0] != shape_f[1]:
        raise ValueError(f"f and g grids must both be B×B, got {shape_f} and {shape_g}")
    b = shape_f[0]
    gt = build_gamma_1d([d for row in f_densities for d in row], n_cells)
    gu = build_gamma_1d([d for row in g_densities for d in row], n_cells)
    n = gt.shape[-1]
    gt_ = ad.reshape(gt.entries, (b, b, n))
    gu_ = ad.reshape(gu.entries, (b, b, n))
    entries = ad.contract(gu_, gt_, "ijm,ijn->ijmn")
    prov = "parametric" if "parametric" in (gt.provenance, gu.provenance) else "fixed"
    return GammaOperator(entries, 4, prov)


def build_gamma_numeric(pdfs, n_cells: int, tol: float = 1e-9, max_depth: int = 40,
                        breakpoints=()) -> GammaOperator:
    """Quadrature oracle: ``Γ[i, n-1] = ∫_{I_n} pdf_i``.

    ``pdfs`` is one vectorized callable or a list of them. ``breakpoints``
    lists known discontinuities (one shared iterable or one per pdf).
    """
    n_cells = _check_cells(n_cells)
    if callable(pdfs):
        pdfs = [pdfs]
    if breakpoints and not np.isscalar(next(iter(breakpoints))):
        per_pdf = list(breakpoints)
    else:
        per_pdf = [breakpoints] * len(pdfs)
    rows = [cell_integrals(p, n_cells, tol, max_depth, bp) for p, bp in zip(pdfs, per_pdf)]
    return GammaOperator(Tensor(np.stack(rows)), 2, "fixed")


def build_gamma_numeric_2d_entry(pdf2, m: int, n: int, tol: float = 1e-9) -> float:
    """``∫_{I_m} ∫_{I_n} pdf2(t, u) dt du`` for a single (row m, column n) cell."""
    return double_integral(pdf2, n - 1.0, float(n), m - 1.0, float(m), tol)


def conv_gamma(n_cells: int, kernel: int, stride: int, position: int) -> GammaOperator:
    """Indicator Γ of the ``position``-th (1-based) window of a strided convolution."""
    n_cells = _check_cells(n_cells)
    if kernel < 1 or stride < 1 or position < 1:
        raise ValueError("kernel, stride and position must be >= 1")
    start = (position - 1) * stride
    if start + kernel > n_cells:
        raise ValueError(f"window {position} (start {start}, kernel {kernel}) overruns input of {n_cells}")
    g = np.zeros((kernel, n_cells))
    g[np.arange(kernel), start + np.arange(kernel)] = 1.0
    return GammaOperator(Tensor(g), 2, "fixed")


def adaptive_conv_gamma(n_cells: int, kernel: int, stride: int, position: int, amplitude,
                        normalize: bool = False) -> GammaOperator:
    """Γ of a convolution window stretched to ``amplitude`` input cells.

    Row ``i`` is the unnormalized indicator of
    ``[(l-1)S + p(i-1)/K, (l-1)S + p i/K]`` integrated over each cell, so its
    mass is ``p/K``; ``normalize`` divides by that mass.
    """
    n_cells = _check_cells(n_cells)
    if kernel < 1 or stride < 1 or position < 1:
        raise ValueError("kernel, stride and position must be >= 1")
    p = ad.as_tensor(amplitude)
    if p.ndim != 0:
        raise ad.ShapeError("kernel amplitude must be a scalar")
    if p.data <= 0:
        raise ParameterError(f"kernel amplitude must be positive, got {p.data}")
    shape = (kernel, n_cells)
    start = float((position - 1) * stride)
    i = np.arange(1, kernel + 1, dtype=np.float64)[:, None]
    lo_cell, hi_cell = (np.broadcast_to(e, shape) for e in _edges(n_cells))
    left = ad.add(start, ad.mul(p, np.broadcast_to((i - 1.0) / kernel, shape)))
    right = ad.add(start, ad.mul(p, np.broadcast_to(i / kernel, shape)))
    g = overlap_length(lo_cell, hi_cell, left, right)
    if normalize:
        g = ad.div(g, ad.expand(ad.scale(p, 1.0 / kernel), shape, (0, 1)))
    return GammaOperator(g, 2, _provenance(p))


def _intervals(intervals) -> tuple[Tensor, Tensor]:
    if isinstance(intervals, tuple) and len(intervals) == 2 and all(
            isinstance(v, (Tensor, np.ndarray)) for v in intervals):
        lo, hi = (ad.as_tensor(v) for v in intervals)
    else:
        pairs = list(intervals)
        lo = ad.stack([ad.as_tensor(a) for a, _ in pairs])
        hi = ad.stack([ad.as_tensor(b) for _, b in pairs])
    if lo.ndim != 1 or lo.shape != hi.shape:
        raise ad.ShapeError(f"interval bounds must be matching vectors, got {lo.shape} and {hi.shape}")
    return lo, hi


def adaptive_pool_gamma(x, beta, intervals, n_cells: int) -> GammaOperator:
    """Input-dependent pooling Γ: ``m_in e^{βx_n} / Σ_r m_ir e^{βx_r}``.

    ``x`` is ``[N]`` or ``[batch, N]``; ``intervals`` is a sequence of
    ``(lo, hi)`` pairs or a ``(lo, hi)`` pair of vectors. β = 0 averages over
    each interval, β → +∞ takes the max and β → -∞ the min.
    """
    n_cells = _check_cells(n_cells)
    x = ad.as_tensor(x)
    beta = ad.as_tensor(beta)
    if x.ndim not in (1, 2) or x.shape[-1] != n_cells:
        raise ad.ShapeError(f"x must be [{n_cells}] or [batch, {n_cells}], got {x.shape}")
    if beta.ndim != 0:
        raise ad.ShapeError("pooling temperature must be a scalar")
    lo, hi = _intervals(intervals)
    if np.any(hi.data - lo.data <= 0):
        raise ParameterError("every pooling interval needs positive length")
    nb = lo.shape[0]
    shape = (nb, n_cells)
    cell_lo, cell_hi = (np.broadcast_to(e, shape) for e in _edges(n_cells))
    m = overlap_length(cell_lo, cell_hi, ad.expand(lo, shape, (1,)), ad.expand(hi, shape, (1,)))
    if np.any(m.data.sum(axis=1) <= 0):
        raise ParameterError("a pooling interval does not overlap the input domain")

    bx = ad.mul(beta, x)
    # constant shift cancels in the ratio; keeps exp in range
    shift = np.broadcast_to(bx.data.max(axis=-1, keepdims=True), x.shape)
    e = ad.exp(ad.sub(bx, shift))
    if x.ndim == 1:
        w = ad.mul(m, ad.expand(e, shape, (0,)))
        z = ad.expand(ad.tsum(w, axis=1), shape, (1,))
    else:
        full = (x.shape[0],) + shape
        w = ad.mul(ad.expand(m, full, (0,)), ad.expand(e, full, (1,)))
        z = ad.expand(ad.tsum(w, axis=2), full, (2,))
    return GammaOperator(ad.div(w, z), 2, "input-dependent")
