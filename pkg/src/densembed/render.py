"""Receptive-field images: the summed densities on the pixel grid, written as PGM."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .densities import logistic_pdf, squash
from .layers import LogisticEL, LogisticELMicroNet, Model, micro_net_alpha


def _field(mu: np.ndarray, s: np.ndarray, n: int) -> np.ndarray:
    """Sum over (i, j) of the product densities at pixel centers, per field channel."""
    centers = np.arange(n) + 0.5
    pt = logistic_pdf(centers, mu[..., 0, None], s[..., 0, None])
    pu = logistic_pdf(centers, mu[..., 1, None], s[..., 1, None])
    return np.einsum("cijm,cijn->cmn", pu, pt)


def receptive_field(model: Model, image: np.ndarray | None = None) -> np.ndarray:
    """Summed density per field channel, ``[C', N, N]`` (rows, columns)."""
    if isinstance(model, LogisticEL):
        mu = squash(model.params["el.alpha"], model.squash_mu).data
        s = squash(model.params["el.beta"], model.squash_s).data
        return _field(mu, s, model.input_size)
    if isinstance(model, LogisticELMicroNet):
        if image is None:
            raise ValueError("the micro-network field depends on the input; pass an input image")
        x = np.asarray(image, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        alpha = micro_net_alpha(model.mnn_params(), ad.Tensor(x[None]))
        mu = squash(alpha, model.squash_mu).data[0]
        s = squash(model.params["outer.beta"], model.squash_s).data
        return _field(mu, s, model.input_size)
    raise TypeError(f"no receptive-field rendering for {model.kind}")


def to_gray(field: np.ndarray) -> np.ndarray:
    """Min-max rescale to 0..255 (a constant field maps to 0)."""
    lo, hi = float(field.min()), float(field.max())
    if hi <= lo:
        return np.zeros(field.shape, dtype=np.uint8)
    return np.rint((field - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path, gray: np.ndarray) -> None:
    gray = np.asarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    h, w = gray.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + gray.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read binary (P5) or ASCII (P2) 8-bit PGM."""
    raw = Path(path).read_bytes()
    tokens = re.compile(rb"(?:#[^\n]*\n|\s)*(\S+)")
    pos, vals = 0, []
    while len(vals) < 4:
        m = tokens.match(raw, pos)
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        vals.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = vals[0], int(vals[1]), int(vals[2]), int(vals[3])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    if magic == b"P5":
        body = raw[pos + 1:pos + 1 + w * h]
        if len(body) != w * h:
            raise ValueError(f"{path}: truncated PGM body")
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()
    if magic == b"P2":
        return np.array(raw[pos:].split()[:w * h], dtype=np.uint8).reshape(h, w)
    raise ValueError(f"{path}: unsupported PGM magic {magic!r}")


def write_png(path, gray: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(gray, dtype=np.uint8), mode="L").save(path)
