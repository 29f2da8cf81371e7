"""Learned edge and evidence models.

An :class:`EdgeModel` holds the empirical conditional embedding operator for
one directed edge template ``t -> s`` fitted on pairs ``(x_t, x_s)``.  Three
update modes are supported and each exposes the same three steps:

* evaluate incoming messages at ``eval_points(mode)``,
* map the evaluations into the product space with ``lift``,
* turn the elementwise product into outgoing coefficients with ``solve``.

``exact`` works on all ``m`` training points with ``(L + lam m I)^{-1}``;
``linear`` substitutes the low-rank ``K`` and ``L`` (cost linear in ``m``);
``lowrank`` is the constant-time update through the tensor basis and the
precomputed ``W_ts``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .kernels import RBF, Kernel, Kronecker, as_points, is_normalized, power
from .lowrank import LowRankBasis, incomplete_basis

MODES = ("exact", "linear", "lowrank")
LJJ_RIDGE = 1e-10
DEFAULT_LAMBDA = 1e-4


@dataclass(frozen=True, eq=False)
class Support:
    """Points and kernel over which a message is a weighted kernel expansion."""

    points: np.ndarray
    kernel: Kernel
    gram: np.ndarray

    @classmethod
    def build(cls, points, kernel):
        pts = as_points(points)
        return cls(pts, kernel, kernel.gram(pts, pts))

    def __len__(self):
        return len(self.points)


def split_pairs(pairs):
    """Accept a tuple of two ndarrays ``(A, B)`` or a sequence of ``(a, b)`` pairs."""
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], np.ndarray) \
            and isinstance(pairs[1], np.ndarray):
        A, B = as_points(pairs[0]), as_points(pairs[1])
        if len(A) != len(B):
            raise ValueError("pair arrays differ in length")
        return A, B
    pairs = list(pairs)
    A = as_points(np.array([np.atleast_1d(p[0]) for p in pairs], dtype=float))
    B = as_points(np.array([np.atleast_1d(p[1]) for p in pairs], dtype=float))
    return A, B


@dataclass(frozen=True, eq=False)
class FullRankBlock:
    K: np.ndarray
    L: np.ndarray
    factor: tuple

    def solve(self, rhs):
        return cho_solve(self.factor, rhs)


@dataclass(eq=False)
class EdgeModel:
    spec_t: Kernel
    spec_s: Kernel
    lam: float
    degree: int
    m: int
    tensor_points: np.ndarray          # X_t[I']
    target_points: np.ndarray          # X_s[J]
    W_ts: np.ndarray                   # l' x l_J
    K_tensor_cross: np.ndarray         # K_{I'I}
    xt: np.ndarray | None = None
    xs: np.ndarray | None = None
    basis_t: LowRankBasis | None = None
    basis_s: LowRankBasis | None = None
    basis_tensor: LowRankBasis | None = None
    G: np.ndarray | None = None        # l_J x m, linear-mode operator
    full: FullRankBlock | None = None
    _supports: dict = field(default_factory=dict, repr=False)

    @property
    def modes(self):
        out = ["lowrank"]
        if self.G is not None:
            out.append("linear")
        if self.full is not None:
            out.append("exact")
        return tuple(out)

    def _require(self, mode):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if mode not in self.modes:
            raise ValueError(f"edge model was not fitted for mode {mode!r}")

    def eval_points(self, mode):
        self._require(mode)
        if mode == "exact":
            return self.xt
        if mode == "linear":
            return self.basis_t.anchor_points
        return self.tensor_points

    def lift(self, E, mode):
        if mode == "linear":
            return self.basis_t.W.T @ E
        return E

    def solve(self, p, mode):
        if mode == "exact":
            return self.full.solve(p)
        if mode == "linear":
            return self.G @ p
        return self.W_ts.T @ p

    def support(self, mode) -> Support:
        self._require(mode)
        key = "exact" if mode == "exact" else "lowrank"
        if key not in self._supports:
            if key == "exact":
                self._supports[key] = Support(self.xs, self.spec_s, self.full.L)
            else:
                self._supports[key] = Support.build(self.target_points, self.spec_s)
        return self._supports[key]

    def direct_W_ts(self):
        """``W_t^x (W_s' L_JJ W_s + lam m I)^{-1} W_s'`` formed with m x m matrices."""
        Ws = self.basis_s.W
        A = Ws.T @ self.basis_s.anchor_gram @ Ws + self.lam * self.m * np.eye(self.m)
        return self.basis_tensor.W @ np.linalg.solve(A, Ws.T)


def _woodbury_core(basis: LowRankBasis, c: float) -> np.ndarray:
    """``M = (W W' + c L_JJ^{-1})^{-1} L_JJ^{-1}``, so ``W' M = (W' L_JJ W + c I)^{-1} W'``.

    Evaluated as ``(L_JJ W W' + c I)^{-1}``, which is the same matrix without
    forming ``L_JJ^{-1}`` (anchor Grams are often badly conditioned).
    """
    LJJ = basis.anchor_gram
    try:
        cho_factor(LJJ + LJJ_RIDGE * np.eye(basis.rank))
    except np.linalg.LinAlgError as exc:
        raise ValueError("L_JJ is degenerate after ridge") from exc
    W = basis.W
    return lu_solve(lu_factor(LJJ @ (W @ W.T) + c * np.eye(basis.rank)), np.eye(basis.rank))


def fit_edge_model(pairs, spec_t: Kernel, spec_s: Kernel, lam: float = DEFAULT_LAMBDA,
                   epsilon: float = 1e-3, degree: int = 1, keep_full_rank: bool = False,
                   max_rank: int | None = None) -> EdgeModel:
    """Fit the conditional embedding operator of ``X_t`` given ``X_s``.

    ``pairs`` are ``(x_t, x_s)``.  ``degree`` is the number of incoming
    messages multiplied at ``t`` (node degree minus one); the tensor basis
    uses ``power(spec_t, degree)``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    xt, xs = split_pairs(pairs)
    m = len(xt)
    if m < 2:
        raise ValueError("need at least two training pairs")
    degree = max(1, int(degree))

    basis_t = incomplete_basis(spec_t, xt, epsilon, max_rank)
    basis_s = incomplete_basis(spec_s, xs, epsilon, max_rank)
    basis_x = incomplete_basis(power(spec_t, degree), xt, epsilon, max_rank)

    c = lam * m
    Ws = basis_s.W
    M = _woodbury_core(basis_s, c)
    # W_ts = W_t^x W_s' (W_s W_s' + c L_JJ^{-1})^{-1} L_JJ^{-1}
    W_ts = (basis_x.W @ Ws.T) @ M
    G = (Ws.T @ M).T

    full = None
    if keep_full_rank:
        K = spec_t.gram(xt, xt)
        L = spec_s.gram(xs, xs)
        full = FullRankBlock(K, L, cho_factor(L + c * np.eye(m)))

    return EdgeModel(
        spec_t=spec_t, spec_s=spec_s, lam=float(lam), degree=degree, m=m,
        tensor_points=basis_x.anchor_points,
        target_points=basis_s.anchor_points,
        W_ts=W_ts,
        K_tensor_cross=spec_t.gram(basis_x.anchor_points, basis_t.anchor_points),
        xt=xt, xs=xs,
        basis_t=basis_t, basis_s=basis_s, basis_tensor=basis_x,
        G=G, full=full,
    )


@dataclass(eq=False)
class EdgeTemplate:
    """Directional models for one undirected edge template ``(a, b)``.

    ``forward`` carries messages ``a -> b`` (fitted on ``(x_a, x_b)``);
    ``backward`` carries ``b -> a``.  A symmetric template leaves
    ``backward`` unset and uses ``forward`` both ways.
    """

    forward: object
    backward: object = None

    def model(self, reverse: bool):
        if reverse and self.backward is not None:
            return self.backward
        return self.forward


def pool_template_samples(per_edge_pairs: dict, template_assignment: dict) -> dict:
    """Concatenate per-edge pair lists by template, in edge declaration order."""
    pooled: dict = {}
    for edge, pairs in per_edge_pairs.items():
        if edge not in template_assignment:
            raise ValueError(f"edge {edge!r} has no template")
        pooled.setdefault(template_assignment[edge], []).extend(list(pairs))
    for tid in set(template_assignment.values()):
        if not pooled.get(tid):
            raise ValueError(f"template {tid!r} has no samples")
    return pooled


def _gram_root(K):
    """``R`` with ``R'R = K`` over the numerical range of ``K``."""
    w, V = np.linalg.eigh(K)
    # eigenvalues at rounding level would contribute sqrt(eps) noise
    keep = w > len(w) * np.finfo(float).eps * max(w.max(), 0.0)
    return np.sqrt(w[keep])[:, None] * V[:, keep].T


def embedding_error_bound_check(full: EdgeModel, lowrank: EdgeModel, check: bool = True):
    """HS distance between the full and low-rank tensor embedding operators.

    Returns ``(hs_error, bound)`` with
    ``bound = 2 eps (lam_m^-1 + lam_m^-3/2)``, ``lam_m = lam * m`` and
    ``eps`` the larger of the plain ``X_s`` and tensor ``X_t`` residuals.
    With ``check`` the comparison allows rounding of ``64 eps_mach`` times
    the full operator's size, which matters only when both bases are complete.
    """
    for mdl in (full, lowrank):
        if not (is_normalized(mdl.spec_t) and is_normalized(mdl.spec_s)):
            raise ValueError("HS bound requires normalized kernels (k(x, x) <= 1)")
    if full.full is None:
        raise ValueError("first model has no full-rank block")
    if full.m != lowrank.m or full.lam != lowrank.lam or full.degree != lowrank.degree \
            or not np.array_equal(full.xt, lowrank.xt) or not np.array_equal(full.xs, lowrank.xs):
        raise ValueError("models were fitted on different data or settings")

    m = full.m
    ktens = power(full.spec_t, full.degree)
    A = full.full.solve(np.eye(m))
    # anchors are training points, so both operators live on the same m x m
    # coefficient grid and the difference cancels before any trace is taken
    D = A.copy()
    D[np.ix_(lowrank.basis_tensor.anchor_indices, lowrank.basis_s.anchor_indices)] -= lowrank.W_ts
    # ||Phi_t D Phi_s'||_HS = ||R_t D R_s'||_F with R'R = K; a norm of a product
    # keeps rounding linear in eps where the trace form loses half the digits
    RF = _gram_root(ktens.gram(full.xt, full.xt))
    RG = _gram_root(full.spec_s.gram(full.xs, full.xs))
    hs = float(np.linalg.norm(RF @ D @ RG.T))
    floor = 64 * np.finfo(float).eps * float(np.linalg.norm(np.abs(RF) @ np.abs(A) @ np.abs(RG).T))

    eps = max(lowrank.basis_s.achieved_residual, lowrank.basis_tensor.achieved_residual)
    lam_m = full.lam * m
    bound = 2.0 * eps * (1.0 / lam_m + lam_m ** -1.5)
    if check and hs > bound + floor:
        raise AssertionError(f"HS error {hs:.3e} exceeds bound {bound:.3e}")
    return hs, bound


@dataclass(eq=False)
class LikelihoodModel:
    spec_hidden: Kernel
    spec_evidence: Kernel
    lam: float
    hidden: np.ndarray
    evidence: np.ndarray
    factor: tuple
    basis: LowRankBasis | None = None
    G: np.ndarray | None = None        # l x m low-rank operator
    _supports: dict = field(default_factory=dict, repr=False)

    @property
    def m(self):
        return len(self.hidden)

    def coefficients(self, observed):
        """``(L + lam m I)^{-1} k_y`` for each observed row, as columns."""
        Y = as_points(observed)
        if Y.shape[1] != self.evidence.shape[1]:
            raise ValueError("observation does not match the evidence domain")
        return cho_solve(self.factor, self.spec_evidence.gram(self.evidence, Y))

    def lowrank_coefficients(self, observed):
        """Anchor coefficients ``W (W' L_JJ W + lam m I)^{-1} k_y`` as columns."""
        if self.G is None:
            raise ValueError("likelihood model has no low-rank basis")
        Y = as_points(observed)
        if Y.shape[1] != self.evidence.shape[1]:
            raise ValueError("observation does not match the evidence domain")
        return self.G @ self.spec_evidence.gram(self.evidence, Y)

    def support(self, mode) -> Support:
        key = "exact" if mode == "exact" else "lowrank"
        if key not in self._supports:
            if key == "exact":
                self._supports[key] = Support.build(self.hidden, self.spec_hidden)
            else:
                if self.basis is None:
                    raise ValueError("likelihood model has no low-rank basis")
                self._supports[key] = Support.build(self.basis.anchor_points, self.spec_hidden)
        return self._supports[key]


def fit_likelihood(pairs, spec_hidden: Kernel, spec_evidence: Kernel,
                   lam: float = DEFAULT_LAMBDA, epsilon: float | None = 1e-3,
                   max_rank: int | None = None) -> LikelihoodModel:
    """Fit the evidence model from ``(hidden, evidence)`` pairs.

    With ``epsilon`` set, a low-rank basis over the hidden samples is kept so
    evidence messages can be projected for the low-rank modes.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    hidden, evidence = split_pairs(pairs)
    m = len(hidden)
    if m < 2:
        raise ValueError("need at least two training pairs")
    L = spec_hidden.gram(hidden, hidden)
    factor = cho_factor(L + lam * m * np.eye(m))
    basis = G = None
    if epsilon:
        basis = incomplete_basis(spec_hidden, hidden, epsilon, max_rank)
        G = (basis.W.T @ _woodbury_core(basis, lam * m)).T
    return LikelihoodModel(spec_hidden, spec_evidence, float(lam), hidden, evidence, factor,
                           basis, G)


@dataclass(frozen=True, eq=False)
class ParzenMarginal:
    """Kernel density estimate used as the node marginal in beliefs.

    RBF samples give a Gaussian mixture with variance ``1 / (2 sigma)`` per
    dimension.  Kronecker samples give the empirical probability mass
    function (density w.r.t. counting measure).
    """

    samples: np.ndarray
    kernel: Kernel

    def __post_init__(self):
        if not isinstance(self.kernel, (RBF, Kronecker)):
            raise ValueError("Parzen marginal needs an RBF (or Kronecker) kernel")
        object.__setattr__(self, "samples", as_points(self.samples))

    def density(self, X) -> np.ndarray:
        X = as_points(X)
        K = self.kernel.gram(X, self.samples)
        if isinstance(self.kernel, Kronecker):
            return K.mean(axis=1)
        d = self.samples.shape[1]
        return (self.kernel.sigma / np.pi) ** (d / 2) * K.mean(axis=1)


def parzen_density(marginal: ParzenMarginal, x) -> float:
    return float(marginal.density(np.atleast_2d(np.asarray(x, dtype=float)))[0])
