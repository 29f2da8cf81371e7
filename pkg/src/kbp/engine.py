"""Loopy kernel belief propagation.

Messages are kernel expansions over a :class:`~kbp.model.Support`.  An
update for ``t -> s`` evaluates every incoming message of ``t`` (except the
one from ``s``, and including ``t``'s evidence message) at the edge model's
evaluation points, multiplies the evaluations elementwise and hands the
product to the model's solve step.  The result is rescaled so that its
largest absolute value at its own support points is one.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .graph import FactorGraph
from .kernels import as_points
from .model import EdgeModel, EdgeTemplate, LikelihoodModel, ParzenMarginal, Support

INIT_RIDGE = 1e-8
INIT_REFINE = 2
DEFAULT_TOL = 1e-4
DEFAULT_ITERS = 30


@dataclass(frozen=True, eq=False)
class Message:
    source: object
    target: object
    mode: str
    coef: np.ndarray
    support: Support
    scale: float = 1.0
    values: np.ndarray | None = field(default=None, repr=False)

    def __call__(self, X) -> np.ndarray:
        return self.support.kernel.gram(as_points(X), self.support.points) @ self.coef

    def anchor_values(self) -> np.ndarray:
        if self.values is not None:
            return self.values
        return self.support.gram @ self.coef


def make_message(source, target, mode, coef, support, where="") -> Message:
    """Normalise ``coef`` so the max absolute support evaluation is one.

    The divisor is the signed extreme value, so that evaluation is ``+1``;
    messages are only defined up to a nonzero constant and this keeps a
    globally negated message from flipping sign every round.
    """
    vals = support.gram @ coef
    top = float(vals[np.argmax(np.abs(vals))]) if len(vals) else 0.0
    if not np.isfinite(top) or not np.all(np.isfinite(coef)):
        raise FloatingPointError(f"non-finite message {source}->{target}{where}")
    if top == 0.0:
        raise FloatingPointError(f"message {source}->{target} vanished{where}")
    return Message(source, target, mode, coef / top, support, top, vals / top)


class GramCache:
    """Cross-Gram matrices between fixed point sets and message supports."""

    def __init__(self):
        self._store = {}

    def get(self, points: np.ndarray, support: Support) -> np.ndarray:
        key = (id(points), id(support))
        hit = self._store.get(key)
        if hit is None or hit[0] is not points or hit[1] is not support:
            K = support.kernel.gram(points, support.points)
            hit = (points, support, K)
            self._store[key] = hit
        return hit[2]


@dataclass
class Templates:
    edges: dict
    likelihoods: dict = field(default_factory=dict)

    def edge_model(self, graph: FactorGraph, t, s) -> EdgeModel:
        tid, reverse = graph.template_of(t, s)
        if tid not in self.edges:
            raise KeyError(f"missing edge template {tid!r}")
        tpl = self.edges[tid]
        return tpl.model(reverse) if isinstance(tpl, EdgeTemplate) else tpl

    def likelihood(self, tid) -> LikelihoodModel:
        if tid not in self.likelihoods:
            raise KeyError(f"missing likelihood template {tid!r}")
        return self.likelihoods[tid]


@dataclass
class MessageStore:
    mode: str
    messages: dict = field(default_factory=dict)   # (t, s) -> Message
    evidence: dict = field(default_factory=dict)   # node -> Message

    def incoming(self, graph: FactorGraph, t, exclude=None) -> list:
        out = [self.messages[(u, t)] for u in graph.neighbors(t) if u != exclude]
        if t in self.evidence:
            out.append(self.evidence[t])
        return out

    def copy(self):
        return MessageStore(self.mode, dict(self.messages), dict(self.evidence))

    def dump(self, path):
        rows = [{"source": t, "target": s, "evidence": False, "mode": m.mode,
                 "scale": m.scale, "coef": m.coef.tolist()}
                for (t, s), m in self.messages.items()]
        rows += [{"source": "obs", "target": v, "evidence": True, "mode": m.mode,
                  "scale": m.scale, "coef": m.coef.tolist()}
                 for v, m in self.evidence.items()]
        with open(path, "w") as fh:
            json.dump(rows, fh)


def _evaluate(model, mode, msg, cache, memo):
    key = (id(msg), id(model), mode)
    if memo is not None:
        hit = memo.get(key)
        if hit is not None and hit[0] is msg:
            return hit[1]
    val = model.lift(cache.get(model.eval_points(mode), msg.support) @ msg.coef, mode)
    if memo is not None:
        memo[key] = (msg, val)
    return val


def _product(model: EdgeModel, mode, incoming, cache, memo=None):
    n = len(model.eval_points(mode)) if mode != "linear" else model.m
    p = np.ones(n)
    for msg in incoming:
        p = p * _evaluate(model, mode, msg, cache, memo)
    return p


def _update(t, s, incoming, model, mode, cache=None, memo=None, where=""):
    cache = GramCache() if cache is None else cache
    p = _product(model, mode, incoming, cache, memo)
    return make_message(t, s, mode, model.solve(p, mode), model.support(mode), where)


def update_message_exact(edge, incoming, model: EdgeModel, cache=None) -> Message:
    """``beta_ts = (L + lam m I)^{-1} (prod_u K_cross beta_ut)``, normalised."""
    t, s = edge
    return _update(t, s, incoming, model, "exact", cache)


def update_message_approx(edge, incoming, model: EdgeModel, cache=None, mode="lowrank") -> Message:
    """Constant-time update ``alpha_ts = W_ts' (prod_u K_{I'.} alpha_ut)``.

    ``mode="linear"`` gives the linear-time variant instead, where only the
    plain feature matrices are approximated.
    """
    if mode not in ("lowrank", "linear"):
        raise ValueError("approximate modes are 'lowrank' and 'linear'")
    t, s = edge
    return _update(t, s, incoming, model, mode, cache)


def evidence_message(model: LikelihoodModel, observed, mode="exact", node=None) -> Message:
    """Likelihood-function message of an observed value into its hidden node."""
    Y = np.atleast_1d(np.asarray(observed, dtype=float))[None, :]
    beta = model.coefficients(Y) if mode == "exact" else model.lowrank_coefficients(Y)
    return make_message("obs", node, mode, beta[:, 0], model.support(mode))


def evidence_messages(model: LikelihoodModel, nodes, observed, mode="exact") -> dict:
    """Batched :func:`evidence_message` for many nodes sharing one model."""
    Y = as_points(observed)
    B = model.coefficients(Y) if mode == "exact" else model.lowrank_coefficients(Y)
    sup = model.support(mode)
    return {v: make_message("obs", v, mode, B[:, k].copy(), sup) for k, v in enumerate(nodes)}


def _unit_coef(K, refine=INIT_REFINE):
    """Solve ``(K + ridge I) a = 1`` and refine towards ``K a = 1``.

    Anchor Grams can have eigenvalues near the ridge, where the plain ridge
    solve leaves evaluations visibly below one; each refinement step shrinks
    that error by ``ridge / (eig + ridge)``.
    """
    one = np.ones(len(K))
    f = cho_factor(K + INIT_RIDGE * np.eye(len(K)))
    a = cho_solve(f, one)
    for _ in range(refine):
        a = a + cho_solve(f, one - K @ a)
    return a


def init_messages(graph: FactorGraph, templates: Templates, mode="lowrank") -> MessageStore:
    """Unit-valued messages on every directed edge, plus evidence messages.

    Each edge message is one at every anchor of its support.
    """
    graph.check_templates(templates.edges, templates.likelihoods)
    store = MessageStore(mode)
    ones_coef = {}
    for t, s in graph.directed_edges():
        sup = templates.edge_model(graph, t, s).support(mode)
        if id(sup) not in ones_coef:
            ones_coef[id(sup)] = (sup, _unit_coef(sup.gram))
        store.messages[(t, s)] = make_message(t, s, mode, ones_coef[id(sup)][1], sup)

    by_template: dict = {}
    for v, (obs, tid) in graph.evidence.items():
        by_template.setdefault(tid, []).append((v, obs))
    for tid, items in by_template.items():
        nodes = [v for v, _ in items]
        obs = np.array([np.atleast_1d(o) for _, o in items], dtype=float)
        store.evidence.update(evidence_messages(templates.likelihood(tid), nodes, obs, mode))
    return store


@dataclass
class Diagnostics:
    rounds: list = field(default_factory=list)   # (round, residual, millis)
    converged: bool = False
    n_updates: int = 0
    update_seconds: float = 0.0
    threads: int = 1

    @property
    def residuals(self):
        return [r for _, r, _ in self.rounds]

    @property
    def seconds_per_update(self):
        return self.update_seconds / self.n_updates if self.n_updates else float("nan")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "residual", "millis"])
            for row in self.rounds:
                w.writerow(row)


def run_bp(graph: FactorGraph, templates: Templates, store: MessageStore,
           schedule="synchronous", max_iters=DEFAULT_ITERS, tol=DEFAULT_TOL,
           threads=1, cache=None):
    """Iterate full rounds of message updates until the residual drops to ``tol``.

    The residual of a round is the largest sup-norm change of any message's
    support evaluations.  ``synchronous`` computes every message from the
    previous round's store (edges may run on ``threads`` workers);
    ``round_robin`` updates in place in edge declaration order.
    """
    if schedule not in ("synchronous", "round_robin"):
        raise ValueError(f"unknown schedule {schedule!r}")
    mode = store.mode
    cache = GramCache() if cache is None else cache
    order = graph.directed_edges()
    models = {e: templates.edge_model(graph, *e) for e in order}
    diag = Diagnostics(threads=threads)
    store = store.copy()
    pool = ThreadPoolExecutor(threads) if threads > 1 and schedule == "synchronous" else None

    try:
        for it in range(1, max_iters + 1):
            memo: dict = {}
            start = time.perf_counter()
            where = f" in round {it}"
            if schedule == "synchronous":
                prev = store

                def step(e):
                    t, s = e
                    return _update(t, s, prev.incoming(graph, t, exclude=s), models[e],
                                   mode, cache, memo, where)

                new = list(pool.map(step, order)) if pool else [step(e) for e in order]
                store = MessageStore(mode, dict(zip(order, new)), prev.evidence)
                resid = max((float(np.max(np.abs(n.values - prev.messages[e].values)))
                             for e, n in zip(order, new)), default=0.0)
            else:
                resid = 0.0
                for e in order:
                    t, s = e
                    old = store.messages[e]
                    msg = _update(t, s, store.incoming(graph, t, exclude=s), models[e],
                                  mode, cache, memo, where)
                    store.messages[e] = msg
                    resid = max(resid, float(np.max(np.abs(msg.values - old.values))))
            elapsed = time.perf_counter() - start
            diag.update_seconds += elapsed
            diag.n_updates += len(order)
            diag.rounds.append((it, resid, 1000.0 * elapsed))
            if resid <= tol:
                diag.converged = True
                break
    finally:
        if pool:
            pool.shutdown()
    return store, diag


@dataclass
class Belief:
    node: object
    candidates: np.ndarray
    weights: np.ndarray
    map_index: int

    @property
    def map_point(self):
        return self.candidates[self.map_index]

    @property
    def normalized(self):
        return self.weights / np.sum(self.weights)


def _argmax_first(w):
    return int(np.argmax(w))


def compute_belief(node, store: MessageStore, graph: FactorGraph, parzen: ParzenMarginal | None,
                   candidates, cache=None) -> Belief:
    """Belief weights ``P(c) prod_u m_us(c)`` over candidate points."""
    C = as_points(candidates)
    if len(C) == 0:
        raise ValueError("candidate set is empty")
    cache = GramCache() if cache is None else cache
    w = parzen.density(C) if parzen is not None else np.ones(len(C))
    for msg in store.incoming(graph, node):
        w = w * (cache.get(C, msg.support) @ msg.coef)
    return Belief(node, C, w, _argmax_first(w))


def map_estimates(graph: FactorGraph, store: MessageStore, parzen, candidates, cache=None):
    """MAP candidate index for every node."""
    C = as_points(candidates)
    cache = GramCache() if cache is None else cache
    out = np.empty(graph.n_nodes, dtype=int)
    base = parzen.density(C) if parzen is not None else np.ones(len(C))
    for v in range(graph.n_nodes):
        w = base.copy()
        for msg in store.incoming(graph, v):
            w = w * (cache.get(C, msg.support) @ msg.coef)
        out[v] = _argmax_first(w)
    return out
