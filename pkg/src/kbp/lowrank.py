"""Incomplete Gram-Schmidt orthogonalisation in feature space.

Builds ``Phi ~= Phi_I W`` by greedily pivoting on the point whose feature has
the largest residual norm against the span of the anchors picked so far.
Only kernel evaluations are used: one kernel column per accepted pivot, so a
rank-``l`` basis over ``m`` points costs ``O(m l^2)``.

Passing ``power(spec, d)`` as the kernel gives the tensor-feature basis, since
``<xi(x), xi(y)> = k(x, y)^d``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .kernels import Kernel, SampleSet, as_points


@dataclass(frozen=True, eq=False)
class LowRankBasis:
    anchor_indices: np.ndarray
    W: np.ndarray
    achieved_residual: float
    kernel: Kernel
    points: np.ndarray
    profile: tuple
    epsilon: float
    capped: bool = False

    @property
    def rank(self) -> int:
        return len(self.anchor_indices)

    @cached_property
    def anchor_points(self) -> np.ndarray:
        return self.points[self.anchor_indices]

    @cached_property
    def anchor_gram(self) -> np.ndarray:
        return self.kernel.gram(self.anchor_points, self.anchor_points)


def incomplete_basis(spec: Kernel, X, epsilon: float, max_rank: int | None = None) -> LowRankBasis:
    """Greedy pivoted Gram-Schmidt until every residual is at most ``epsilon``.

    At least one anchor is always chosen.  Ties in the pivot choice go to the
    lowest index.  Hitting ``max_rank`` first sets ``capped`` instead of
    raising.
    """
    if isinstance(X, SampleSet):
        X = X.points
    pts = as_points(X)
    m = len(pts)
    if m == 0:
        raise ValueError("need at least one point")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    cap = m if max_rank is None else max(1, min(int(max_rank), m))

    resid2 = np.array(spec.diag(pts), dtype=float)
    if not np.all(np.isfinite(resid2)):
        raise ValueError("non-finite kernel values")
    R = np.zeros((cap, m))
    anchors: list[int] = []
    profile: list[float] = []
    capped = False

    while True:
        r = np.sqrt(np.maximum(resid2, 0.0))
        j = int(np.argmax(r))
        if anchors and r[j] <= epsilon:
            break
        if len(anchors) == cap:
            capped = True
            break
        if r[j] <= 0.0:
            raise ValueError("all feature vectors are zero; no basis can be formed")
        n = len(anchors)
        col = spec.gram(pts, pts[j:j + 1])[:, 0]
        if not np.all(np.isfinite(col)):
            raise ValueError("non-finite kernel values")
        row = (col - R[:n].T @ R[:n, j]) / r[j]
        # earlier anchors lie in the span exactly; remove round-off there
        row[anchors] = 0.0
        row[j] = r[j]
        R[n] = row
        resid2 = resid2 - row ** 2
        anchors.append(j)
        resid2[anchors] = 0.0
        profile.append(float(np.sqrt(np.max(np.maximum(resid2, 0.0)))))

    idx = np.array(anchors, dtype=int)
    R = R[: len(anchors)]
    W = solve_triangular(R[:, idx], R, lower=False)
    return LowRankBasis(
        anchor_indices=idx,
        W=W,
        achieved_residual=profile[-1],
        kernel=spec,
        points=pts,
        profile=tuple(profile),
        epsilon=float(epsilon),
        capped=capped and profile[-1] > epsilon,
    )


def residual_profile(basis: LowRankBasis) -> list[float]:
    return list(basis.profile)


def reconstruct_gram(basis: LowRankBasis) -> np.ndarray:
    G = basis.W.T @ basis.anchor_gram @ basis.W
    return 0.5 * (G + G.T)


def recompute_residuals(basis: LowRankBasis) -> np.ndarray:
    """Per-point ``||phi(x_i) - Phi_I W^i||`` from kernel values alone."""
    K_Ia = basis.kernel.gram(basis.anchor_points, basis.points)
    W = basis.W
    quad = np.einsum("li,lk,ki->i", W, basis.anchor_gram, W)
    cross = np.einsum("li,li->i", W, K_Ia)
    r2 = basis.kernel.diag(basis.points) - 2.0 * cross + quad
    return np.sqrt(np.maximum(r2, 0.0))


def save_basis(basis: LowRankBasis, path) -> None:
    """Dump anchors, W and residual bookkeeping to an ``.npz`` file."""
    np.savez(
        path,
        anchor_indices=basis.anchor_indices,
        W=basis.W,
        achieved_residual=basis.achieved_residual,
        profile=np.array(basis.profile),
        epsilon=basis.epsilon,
        capped=basis.capped,
    )


def load_basis(path, spec: Kernel, X) -> LowRankBasis:
    with np.load(path) as f:
        return LowRankBasis(
            anchor_indices=f["anchor_indices"].astype(int),
            W=f["W"],
            achieved_residual=float(f["achieved_residual"]),
            kernel=spec,
            points=as_points(X.points if isinstance(X, SampleSet) else X),
            profile=tuple(float(v) for v in f["profile"]),
            epsilon=float(f["epsilon"]),
            capped=bool(f["capped"]),
        )
