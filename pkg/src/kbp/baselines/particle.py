"""Particle belief propagation over learned conditional densities.

Each node carries ``b`` particles drawn from a proposal ``pi_t``.  A message
``t -> s`` is the importance-sampled integral

    m_ts(x) = (1/b) sum_i p(x_t^i | x) g_t(i),
    g_t(i)  = lik_t(x_t^i) prod_{u != s} m_ut(x_t^i) / pi_t(x_t^i)

kept as a function so it can be evaluated at moved particles.  Messages are
normalised to sum to one over the receiver's particles.  Every
``resample_every`` rounds the particles are moved by Metropolis-Hastings
towards the current belief, which then becomes the proposal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..graph import FactorGraph
from ..kernels import as_points
from .lscde import GaussianMixtureConditional

SKIP_WEIGHT = 1e-7
MH_STEPS = 10


@dataclass
class ParticleSet:
    points: dict                                   # node -> (b, d)
    proposal: dict = field(default_factory=dict)   # node -> (b,) proposal density

    def __post_init__(self):
        sizes = {len(p) for p in self.points.values()}
        if not sizes or min(sizes) < 1:
            raise ValueError("every node needs at least one particle")
        self.points = {v: as_points(p) for v, p in self.points.items()}
        for v, p in self.points.items():
            w = self.proposal.setdefault(v, np.ones(len(p)))
            if len(w) != len(p) or not np.all(np.isfinite(w)):
                raise ValueError(f"bad proposal weights at node {v}")

    @property
    def b(self):
        return len(next(iter(self.points.values())))


def node_rng(seed, node, rnd):
    return np.random.default_rng([int(seed), int(node), int(rnd)])


def init_particles(graph: FactorGraph, samples, b: int, seed=0, marginal=None) -> ParticleSet:
    """Draw ``b`` particles per node uniformly from training samples.

    ``samples`` is one array shared by all nodes or a ``node -> array`` map.
    The proposal density is ``marginal.density`` at the particles when a
    marginal is given (the samples follow it), otherwise constant.
    """
    if b < 1:
        raise ValueError("b must be at least 1")
    pts, prop = {}, {}
    for v in range(graph.n_nodes):
        S = as_points(samples[v] if isinstance(samples, dict) else samples)
        P = S[node_rng(seed, v, 0).integers(0, len(S), size=b)]
        pts[v] = P
        prop[v] = marginal.density(P) if marginal is not None else np.ones(b)
    return ParticleSet(pts, prop)


@dataclass(frozen=True)
class GaussianNoise:
    """Known observation model ``y = x + N(0, sigma^2 I)``, usable as an evidence conditional."""

    sigma: float

    @property
    def h_v(self):
        return self.sigma

    def density(self, V, U) -> np.ndarray:
        V, U = as_points(V), as_points(U)
        d2 = ((V[:, None, :] - U[None, :, :]) ** 2).sum(-1)
        return np.exp(-d2 / (2 * self.sigma ** 2)) / (2 * np.pi * self.sigma ** 2) ** (V.shape[1] / 2)


@dataclass(frozen=True, eq=False)
class ParticleMessage:
    """``x -> (1/b) sum_i p(src_i | x) g_i / norm``."""

    cond: GaussianMixtureConditional | None
    src: np.ndarray | None
    g: np.ndarray | None
    norm: float = 1.0

    def __call__(self, X):
        X = as_points(X)
        if self.cond is None:
            return np.ones(len(X))
        keep = self.g > 0
        P = self.cond.density(self.src[keep], X)           # (b_kept, len(X))
        return (self.g[keep] @ P) / (len(self.g) * self.norm)


@dataclass
class ParticleBelief:
    node: int
    points: np.ndarray
    weights: np.ndarray          # importance weights, sum to one
    target: np.ndarray           # unnormalised belief density at the particles

    @property
    def map_point(self):
        return self.points[int(np.argmax(self.target))]

    @property
    def mean(self):
        return self.weights @ self.points


@dataclass
class ParticleResult:
    beliefs: list
    particles: ParticleSet
    rounds: int
    trace: list = field(default_factory=list)

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.trace, fh)


def _edge_conditional(conditionals, graph, t, s):
    tid, reverse = graph.template_of(t, s)
    if tid not in conditionals:
        raise KeyError(f"missing conditional for template {tid!r}")
    c = conditionals[tid]
    if isinstance(c, tuple):
        return c[1] if reverse else c[0]
    return c


def _likelihood(conditionals, graph, v, X):
    if v not in graph.evidence:
        return np.ones(len(X))
    obs, tid = graph.evidence[v]
    if tid not in conditionals:
        raise KeyError(f"missing conditional for template {tid!r}")
    return conditionals[tid].density(np.atleast_2d(np.asarray(obs, dtype=float)), X)[0]


def particle_bp(graph: FactorGraph, conditionals: dict, particles: ParticleSet, max_iters=30,
                resample_every=15, seed=0, marginal=None, step=None, project=None,
                keep_trace=False) -> ParticleResult:
    """Synchronous particle BP.

    ``conditionals[tid]`` gives ``p(x_t | x_s)`` for messages ``t -> s``:
    either one model shared by both directions, or ``(forward, backward)``
    where ``forward`` serves messages ``a -> b`` of an edge declared
    ``(a, b, tid)``.  Evidence templates map to ``p(y | x)`` models.
    ``marginal`` (optional) multiplies beliefs by a node prior; ``project``
    maps random-walk proposals back onto the domain (e.g. the sphere).
    """
    if max_iters < 0 or resample_every < 1:
        raise ValueError("need max_iters >= 0 and resample_every >= 1")
    if step is None:
        step = min(c.h_v for c in _all_conditionals(conditionals))
    pts = dict(particles.points)
    prop = dict(particles.proposal)
    order = graph.directed_edges()
    conds = {e: _edge_conditional(conditionals, graph, *e) for e in order}
    msgs = {e: ParticleMessage(None, None, None) for e in order}
    trace = []

    def prior(v, X):
        return marginal.density(X) if marginal is not None else np.ones(len(X))

    def target(v, X, current):
        f = prior(v, X) * _likelihood(conditionals, graph, v, X)
        for u in graph.neighbors(v):
            f = f * current[(u, v)](X)
        return f

    for rnd in range(1, max_iters + 1):
        new = {}
        for t, s in order:
            X = pts[t]
            g = _safe_ratio(_likelihood(conditionals, graph, t, X), prop[t])
            for u in graph.neighbors(t):
                if u != s:
                    g = g * msgs[(u, t)](X)
            total = g.sum()
            if not (np.isfinite(total) and total > 0):
                raise FloatingPointError(f"degenerate particle message {t}->{s} in round {rnd}")
            g = g / total
            g = np.where(g < SKIP_WEIGHT, 0.0, g)
            raw = ParticleMessage(conds[(t, s)], X, g)(pts[s])
            z = raw.sum()
            if not (np.isfinite(z) and z > 0):
                raise FloatingPointError(f"all-zero particle message {t}->{s} in round {rnd}")
            new[(t, s)] = ParticleMessage(conds[(t, s)], X, g, float(z))
        msgs = new

        if rnd % resample_every == 0 and rnd < max_iters:
            for v in range(graph.n_nodes):
                pts[v], prop[v] = _metropolis(v, pts[v], lambda X, v=v: target(v, X, msgs),
                                              step, project, node_rng(seed, v, rnd))
        if keep_trace:
            for v in range(graph.n_nodes):
                trace.append({"round": rnd, "node": v, "points": pts[v].tolist(),
                              "proposal": prop[v].tolist()})

    beliefs = []
    for v in range(graph.n_nodes):
        f = target(v, pts[v], msgs)
        w = _safe_ratio(f, prop[v])
        total = w.sum()
        w = w / total if total > 0 else np.full(len(w), 1.0 / len(w))
        beliefs.append(ParticleBelief(v, pts[v], w, f))
    return ParticleResult(beliefs, ParticleSet(pts, prop), max_iters, trace)


def _safe_ratio(a, b):
    """``a / b`` with zero where ``b`` is zero (particles the proposal never reaches)."""
    return np.where(b > 0, a / np.where(b > 0, b, 1.0), 0.0)


def _all_conditionals(conditionals):
    for c in conditionals.values():
        yield from (c if isinstance(c, tuple) else (c,))


def _metropolis(v, X, f, step, project, rng, n_steps=MH_STEPS):
    """Random-walk MH moving every particle ``n_steps`` times; returns points and ``f``."""
    X = X.copy()
    fx = f(X)
    for _ in range(n_steps):
        Y = X + step * rng.standard_normal(X.shape)
        if project is not None:
            Y = project(Y)
        fy = f(Y)
        u = rng.random(len(X))
        ratio = np.where(fx > 0, _safe_ratio(fy, fx), 1.0)
        acc = u < ratio
        X[acc] = Y[acc]
        fx = np.where(acc, fy, fx)
    return X, fx
