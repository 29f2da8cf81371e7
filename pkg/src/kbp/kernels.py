"""Kernel families, Gram matrices and the median bandwidth heuristic.

Every kernel is a frozen dataclass exposing ``gram(X, Y)`` over row-stacked
point arrays and ``diag(X)`` for self-similarities.  The RBF family is
parameterised as ``exp(-sigma * ||x - y||^2)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.spatial.distance import cdist

UNIT_NORM_TOL = 1e-9
MAX_EXACT_PAIRS = 2_000_000
SUBSAMPLE_PAIRS = 1_000_000
DOMAINS = ("euclidean", "sphere", "discrete")


def as_points(X) -> np.ndarray:
    """Coerce to a float (n, d) array; a 1-D input is n scalar points."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None]
    elif X.ndim != 2:
        raise ValueError(f"points must be 1-D or 2-D, got shape {X.shape}")
    return X


def _check_dims(X, Y):
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")


def _inner(X, Y):
    # einsum keeps the per-entry summation order fixed, so gram(X, Y) is
    # bit-for-bit the transpose of gram(Y, X)
    return np.einsum("id,jd->ij", X, Y)


def _check_unit(X):
    norms = np.linalg.norm(X, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        raise ValueError("sphere kernel requires unit-norm inputs")


@dataclass(frozen=True)
class RBF:
    sigma: float
    normalized = True

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("RBF sigma must be positive")

    def gram(self, X, Y):
        X, Y = as_points(X), as_points(Y)
        _check_dims(X, Y)
        return np.exp(-self.sigma * cdist(X, Y, "sqeuclidean"))

    def diag(self, X):
        return np.ones(len(as_points(X)))


@dataclass(frozen=True)
class Linear:
    normalized = False

    def gram(self, X, Y):
        X, Y = as_points(X), as_points(Y)
        _check_dims(X, Y)
        return _inner(X, Y)

    def diag(self, X):
        X = as_points(X)
        return np.einsum("id,id->i", X, X)


@dataclass(frozen=True)
class Sphere:
    """``exp(sigma * <x, y>)`` on the unit sphere."""

    sigma: float
    normalized = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sphere sigma must be positive")

    def gram(self, X, Y):
        X, Y = as_points(X), as_points(Y)
        _check_dims(X, Y)
        _check_unit(X)
        _check_unit(Y)
        return np.exp(self.sigma * _inner(X, Y))

    def diag(self, X):
        X = as_points(X)
        _check_unit(X)
        return np.full(len(X), np.exp(self.sigma))


@dataclass(frozen=True)
class Kronecker:
    normalized = True

    def gram(self, X, Y):
        X, Y = as_points(X), as_points(Y)
        _check_dims(X, Y)
        return np.all(X[:, None, :] == Y[None, :, :], axis=-1).astype(float)

    def diag(self, X):
        return np.ones(len(as_points(X)))


@dataclass(frozen=True)
class Power:
    """Elementwise power of a base kernel: the tensor-feature kernel."""

    base: "Kernel"
    degree: int

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError("power degree must be an integer >= 1")

    @property
    def normalized(self):
        return self.base.normalized

    def gram(self, X, Y):
        return self.base.gram(X, Y) ** self.degree

    def diag(self, X):
        return self.base.diag(X) ** self.degree


Kernel = Union[RBF, Linear, Sphere, Kronecker, Power]


def power(base: Kernel, degree: int) -> Kernel:
    """Tensor-feature kernel; degree 1 returns ``base`` unchanged."""
    if degree == 1:
        return base
    return Power(base, int(degree))


def eval_kernel(spec: Kernel, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return float(spec.gram(x[None, :], y[None, :])[0, 0])


def gram_matrix(spec: Kernel, X, Y=None) -> np.ndarray:
    if isinstance(X, SampleSet):
        X = X.points
    if Y is None:
        Y = X
    elif isinstance(Y, SampleSet):
        Y = Y.points
    return spec.gram(X, Y)


def is_normalized(spec: Kernel) -> bool:
    """True when ``k(x, x) <= 1`` holds for every input."""
    return bool(spec.normalized)


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray
    domain: str = "euclidean"

    def __post_init__(self):
        pts = as_points(self.points)
        if len(pts) == 0:
            raise ValueError("SampleSet must be nonempty")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.domain == "sphere":
            _check_unit(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    @classmethod
    def from_csv(cls, path, domain="euclidean"):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        try:
            pts = np.array([[float(v) for v in r] for r in rows])
        except ValueError:
            # tolerate a header line
            pts = np.array([[float(v) for v in r] for r in rows[1:]])
        return cls(pts, domain)


def _pair_values(X, metric, rng):
    n = len(X)
    n_pairs = n * (n - 1) // 2
    if n_pairs <= MAX_EXACT_PAIRS:
        iu, ju = np.triu_indices(n, k=1)
    else:
        i = rng.integers(0, n, size=SUBSAMPLE_PAIRS)
        j = rng.integers(0, n - 1, size=SUBSAMPLE_PAIRS)
        j = j + (j >= i)
        iu, ju = np.minimum(i, j), np.maximum(i, j)
        order = np.lexsort((ju, iu))
        iu, ju = iu[order], ju[order]
    A, B = X[iu], X[ju]
    if metric == "distance":
        return np.sum((A - B) ** 2, axis=1)
    return np.sum(A * B, axis=1)


def median_heuristic(X, metric: str = "distance", seed: int = 0) -> float:
    """Bandwidth from pairwise statistics over ``i < j``.

    ``distance`` returns ``1 / median(||x_i - x_j||^2)`` (the RBF sigma);
    ``inner_product`` returns ``median(<x_i, x_j>)`` (the sphere sigma).
    Above two million pairs a seeded subsample of one million is used.
    """
    if isinstance(X, SampleSet):
        X = X.points
    X = as_points(X)
    if len(X) < 2:
        raise ValueError("median heuristic needs at least two points")
    if metric not in ("distance", "inner_product"):
        raise ValueError(f"unknown metric {metric!r}")
    vals = _pair_values(X, metric, np.random.default_rng(seed))
    med = float(np.median(vals))
    if metric == "distance":
        if med <= 0:
            raise ValueError("median squared distance is zero")
        return 1.0 / med
    return med


def kernel_to_dict(spec: Kernel) -> dict:
    if isinstance(spec, RBF):
        return {"family": "rbf", "sigma": spec.sigma}
    if isinstance(spec, Sphere):
        return {"family": "sphere", "sigma": spec.sigma}
    if isinstance(spec, Linear):
        return {"family": "linear"}
    if isinstance(spec, Kronecker):
        return {"family": "kronecker"}
    if isinstance(spec, Power):
        return {"family": "power", "base": kernel_to_dict(spec.base), "degree": spec.degree}
    raise TypeError(f"not a kernel: {spec!r}")


def kernel_from_dict(d: dict) -> Kernel:
    fam = d["family"]
    if fam == "rbf":
        return RBF(float(d["sigma"]))
    if fam == "sphere":
        return Sphere(float(d["sigma"]))
    if fam == "linear":
        return Linear()
    if fam == "kronecker":
        return Kronecker()
    if fam == "power":
        return Power(kernel_from_dict(d["base"]), int(d["degree"]))
    raise ValueError(f"unknown kernel family {fam!r}")
