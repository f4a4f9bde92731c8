"""Adaptive Simpson quadrature, vectorized over many integrals at once.

Used only as an independent oracle for the closed-form Γ builders; nothing
here is differentiable.
"""
from __future__ import annotations

import numpy as np


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved tolerance {achieved:.3e})")
        self.achieved = achieved


def adaptive_simpson(f, a, b, tol: float = 1e-9, max_depth: int = 40, owners=None) -> np.ndarray:
    """Integrate ``f`` over each ``[a[k], b[k]]`` to absolute tolerance ``tol``.

    ``f(x, k)`` is called with an array of abscissae and the matching array
    of integral indices, so one callable can serve a family of integrands.
    Intervals are bisected breadth-first; a panel is accepted once
    ``|S_left + S_right - S| <= 15 * tol_panel`` and the tolerance is halved
    at each bisection. Raises :class:`QuadratureError` if any panel still
    fails at ``max_depth``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    a, b = np.broadcast_arrays(a, b)
    n_int = a.size
    a, b = a.ravel(), b.ravel()
    k = np.arange(n_int) if owners is None else np.asarray(owners).ravel()
    out = np.zeros(n_int)

    m = 0.5 * (a + b)
    fa, fm, fb = f(a, k), f(m, k), f(b, k)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    eps = np.full(a.shape, float(tol))
    owner = np.arange(n_int)
    worst = 0.0

    for depth in range(max_depth + 1):
        if owner.size == 0:
            break
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm, k[owner]), f(rm, k[owner])
        h = (b - a) / 12.0
        left = h * (fa + 4.0 * flm + fm)
        right = h * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        done = np.abs(delta) <= 15.0 * eps
        if depth == max_depth:
            worst = float(np.abs(delta[~done]).sum() / 15.0) if np.any(~done) else 0.0
            done[:] = True
        np.add.at(out, owner[done], (left + right + delta / 15.0)[done])
        keep = ~done
        if not np.any(keep):
            owner = owner[:0]
            break
        owner = np.concatenate([owner[keep], owner[keep]])
        a, m, b = (np.concatenate([a[keep], m[keep]]), np.concatenate([lm[keep], rm[keep]]),
                   np.concatenate([m[keep], b[keep]]))
        fa, fm, fb = (np.concatenate([fa[keep], fm[keep]]), np.concatenate([flm[keep], frm[keep]]),
                      np.concatenate([fm[keep], fb[keep]]))
        whole = np.concatenate([left[keep], right[keep]])
        eps = np.concatenate([eps[keep], eps[keep]]) * 0.5
    if worst > 0.0:
        raise QuadratureError(f"adaptive Simpson did not converge within depth {max_depth}", worst)
    return out


def integrate(f, a: float, b: float, tol: float = 1e-9, max_depth: int = 40) -> float:
    """Scalar convenience wrapper; ``f`` takes a single array argument."""
    return float(adaptive_simpson(lambda x, _k: f(x), a, b, tol, max_depth)[0])


def _pieces(lo: float, hi: float, breakpoints) -> list[tuple[float, float]]:
    cuts = [lo] + sorted(p for p in breakpoints if lo < p < hi) + [hi]
    return list(zip(cuts[:-1], cuts[1:]))


def cell_integrals(pdf, n_cells: int, tol: float = 1e-9, max_depth: int = 40, breakpoints=(),
                   inset: float = 1e-13) -> np.ndarray:
    """``∫_{n-1}^{n} pdf(t) dt`` for ``n = 1..n_cells``.

    The integration range of every cell is split at ``breakpoints`` (known
    jump locations of ``pdf``) and each piece is pulled in by ``inset`` at
    both ends so Simpson never samples the jump itself. Pieces share the
    cell tolerance in proportion to their length.
    """
    los, his, owners, tols = [], [], [], []
    for n in range(1, n_cells + 1):
        for lo, hi in _pieces(n - 1.0, float(n), breakpoints):
            los.append(lo + inset)
            his.append(hi - inset)
            owners.append(n - 1)
            tols.append(tol * (hi - lo))
    los, his, owners = np.array(los), np.array(his), np.array(owners)
    out = np.zeros(n_cells)
    # one call per tolerance level keeps the per-panel tolerance exact
    for t in np.unique(tols):
        sel = np.asarray(tols) == t
        vals = adaptive_simpson(lambda x, _k: pdf(x), los[sel], his[sel], t, max_depth)
        np.add.at(out, owners[sel], vals)
    return out


def double_integral(pdf2, t_lo: float, t_hi: float, u_lo: float, u_hi: float,
                    tol: float = 1e-9, max_depth: int = 40) -> float:
    """Nested adaptive Simpson of ``pdf2(t, u)`` over a rectangle."""
    span_t = t_hi - t_lo

    def outer(u, _k):
        u = np.asarray(u, dtype=np.float64)
        inner = adaptive_simpson(lambda t, k: pdf2(t, u[k]), np.full(u.shape, t_lo), np.full(u.shape, t_hi),
                                 tol / (4.0 * max(span_t, 1.0)), max_depth)
        return inner

    return float(adaptive_simpson(outer, u_lo, u_hi, tol / 2.0, max_depth)[0])
