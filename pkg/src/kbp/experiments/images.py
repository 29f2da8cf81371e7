"""Synthetic ring images, Gaussian noise and plain-text PGM I/O."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RingImage:
    pixels: np.ndarray       # (height, width) gray values in [0, 255]
    colors: int

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def levels(self):
        return np.unique(self.pixels)


def generate_ring_image(width: int, height: int, colors: int) -> RingImage:
    """Concentric rings about pixel ``(height // 2, width // 2)``.

    ``ring = floor(colors * r / r_max)`` clamped to ``colors - 1``, where
    ``r_max`` is the distance to the farthest corner, and
    ``gray = round(255 * ring / (colors - 1))``.  Small images cannot realise
    every ring index near the centre, so fewer than ``colors`` levels may
    appear when ``colors`` is large relative to the size.
    """
    if colors < 2:
        raise ValueError("need at least two colors")
    if width < 8 or height < 8:
        raise ValueError("image must be at least 8x8")
    ci, cj = height // 2, width // 2
    I, J = np.mgrid[0:height, 0:width]
    r = np.hypot(I - ci, J - cj)
    r_max = max(np.hypot(ci - a, cj - b) for a in (0, height - 1) for b in (0, width - 1))
    ring = np.minimum(np.floor(colors * r / r_max).astype(int), colors - 1)
    gray = np.round(255.0 * ring / (colors - 1))
    return RingImage(gray, colors)


def add_gaussian_noise(image, sigma: float, seed: int) -> np.ndarray:
    """Add seeded ``N(0, sigma^2)`` noise per pixel and clamp to ``[0, 255]``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    img = np.asarray(image.pixels if isinstance(image, RingImage) else image, dtype=float)
    noise = np.random.default_rng(seed).normal(0.0, sigma, size=img.shape) if sigma > 0 else 0.0
    return np.clip(img + noise, 0.0, 255.0)


def rmse(a, b) -> float:
    return float(np.sqrt(np.mean((np.asarray(a, float) - np.asarray(b, float)) ** 2)))


def mae(a, b) -> float:
    return float(np.mean(np.abs(np.asarray(a, float) - np.asarray(b, float))))


def write_pgm(path, pixels, maxval=255):
    """Write an ASCII (P2) PGM; values are rounded and clamped."""
    P = np.clip(np.round(np.asarray(pixels, dtype=float)), 0, maxval).astype(int)
    h, w = P.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{w} {h}\n{maxval}\n")
        for row in P:
            fh.write(" ".join(map(str, row)) + "\n")


def read_pgm(path) -> np.ndarray:
    tokens = []
    with open(path) as fh:
        for line in fh:
            tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path}: only ASCII P2 PGM is supported")
    w, h, maxval = (int(t) for t in tokens[1:4])
    vals = np.array(tokens[4:4 + w * h], dtype=float)
    if len(vals) != w * h:
        raise ValueError(f"{path}: expected {w * h} pixels, found {len(vals)}")
    return vals.reshape(h, w) * (255.0 / maxval)
