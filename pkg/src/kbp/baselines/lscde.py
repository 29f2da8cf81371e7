"""Least-squares conditional density estimation with Gaussian basis functions.

The model is ``p(v | u) ∝ sum_i alpha_i phi_i(u) g_i(v)`` with

    phi_i(u) = exp(-|u - q_i|^2 / (2 h_u^2)),   g_i(v) = exp(-|v - r_i|^2 / (2 h_v^2))

and centres ``(q_i, r_i)`` drawn from the training pairs.  Fitting minimises a
squared loss, which has the closed form ``alpha = [(H + lam I)^{-1} h]_+``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solve
from scipy.spatial.distance import cdist

from ..kernels import as_points
from ..model import split_pairs


@dataclass(frozen=True)
class GaussianMixtureConditional:
    q: np.ndarray          # (b, du) conditioning-side centres
    r: np.ndarray          # (b, dv) output-side centres
    h_u: float
    h_v: float
    alpha: np.ndarray      # (b,) nonnegative

    def __post_init__(self):
        if np.any(self.alpha < 0) or not np.any(self.alpha > 0):
            raise ValueError("weights must be nonnegative with at least one positive")
        if not (self.h_u > 0 and self.h_v > 0):
            raise ValueError("bandwidths must be positive")

    @property
    def b(self):
        return len(self.alpha)

    def phi(self, U):
        return np.exp(-cdist(as_points(U), self.q, "sqeuclidean") / (2 * self.h_u ** 2))

    def g(self, V):
        return np.exp(-cdist(as_points(V), self.r, "sqeuclidean") / (2 * self.h_v ** 2))

    def density(self, V, U) -> np.ndarray:
        """Matrix ``p(V[k] | U[j])`` of shape ``(len(V), len(U))``.

        Each column integrates to one over ``v``.  Conditioning points far
        from every centre get density zero rather than a division by zero.
        """
        dv = self.r.shape[1]
        A = self.phi(U) * self.alpha                     # (nu, b)
        mass = A.sum(axis=1) * (2 * np.pi * self.h_v ** 2) ** (dv / 2)
        num = self.g(V) @ A.T                            # (nv, nu)
        out = np.zeros_like(num)
        ok = mass > 0
        out[:, ok] = num[:, ok] / mass[ok]
        return out


def product_integral(r, h_v) -> np.ndarray:
    """``int g_i(v) g_k(v) dv`` for all centre pairs, in closed form."""
    r = as_points(r)
    dv = r.shape[1]
    return (np.pi * h_v ** 2) ** (dv / 2) * np.exp(-cdist(r, r, "sqeuclidean") / (4 * h_v ** 2))


def design_matrices(u, v, q, r, h_u, h_v):
    """``(H, h)`` summed over the training pairs."""
    Phi = np.exp(-cdist(as_points(u), as_points(q), "sqeuclidean") / (2 * h_u ** 2))
    Gv = np.exp(-cdist(as_points(v), as_points(r), "sqeuclidean") / (2 * h_v ** 2))
    H = (Phi.T @ Phi) * product_integral(r, h_v)
    h = np.sum(Phi * Gv, axis=0)
    return H, h


def fit_conditional_density_ls(pairs, b: int, bandwidth, lam: float = 1e-3,
                               seed: int = 0) -> GaussianMixtureConditional:
    """Fit ``p(v | u)`` from ``(u, v)`` pairs.

    ``bandwidth`` is a scalar shared by both sides or a pair ``(h_u, h_v)``.
    ``b`` centres are drawn without replacement from the pairs using ``seed``.
    """
    u, v = split_pairs(pairs)
    m = len(u)
    if not 1 <= b <= m:
        raise ValueError(f"need 1 <= b <= m, got b={b}, m={m}")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    h_u, h_v = (bandwidth, bandwidth) if np.isscalar(bandwidth) else bandwidth
    idx = np.sort(np.random.default_rng(seed).choice(m, size=b, replace=False))
    q, r = u[idx], v[idx]
    H, h = design_matrices(u, v, q, r, h_u, h_v)
    try:
        alpha = solve(H + lam * np.eye(b), h, assume_a="pos")
    except LinAlgError as exc:
        raise ValueError("H + lam I is singular") from exc
    alpha = np.maximum(alpha, 0.0)
    if not np.any(alpha > 0):
        raise ValueError("all mixture weights were projected to zero")
    return GaussianMixtureConditional(q, r, float(h_u), float(h_v), alpha)


def fit_single_gaussian(pairs):
    """Linear-Gaussian conditional ``v | u ~ N(a + B u, s^2)``, for 1-D ``v``.

    A reference fit for comparisons; returns a callable ``(V, U) -> density``.
    """
    u, v = split_pairs(pairs)
    X = np.hstack([np.ones((len(u), 1)), u])
    coef, *_ = np.linalg.lstsq(X, v[:, 0], rcond=None)
    s2 = float(np.mean((v[:, 0] - X @ coef) ** 2))

    def density(V, U):
        mu = np.hstack([np.ones((len(as_points(U)), 1)), as_points(U)]) @ coef
        d = as_points(V)[:, :1] - mu[None, :]
        return np.exp(-d ** 2 / (2 * s2)) / np.sqrt(2 * np.pi * s2)

    return density
