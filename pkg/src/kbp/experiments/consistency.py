"""Kernel BP with Kronecker kernels against exact discrete inference.

A random tree (or chain) dataset of joint discrete configurations is drawn,
with noisy discrete observations at a few nodes.  Kernel BP learns every edge
and likelihood from those samples.  The oracle is the tree MRF built from the
same empirical counts, ``Psi_s = P(x_s) [P(y|x_s)]`` and
``Psi_st = P(x_s, x_t) / (P(x_s) P(x_t))``, marginalised by enumeration.  On a
tree both must agree up to the ridge ``lam``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..baselines.discrete import DiscreteMRF, brute_force_marginals, discrete_bp
from ..engine import Templates, compute_belief, init_messages, run_bp
from ..graph import FactorGraph, random_tree
from ..kernels import Kronecker
from ..model import EdgeTemplate, ParzenMarginal, fit_edge_model, fit_likelihood


@dataclass
class DiscreteProblem:
    edges: list
    X: np.ndarray            # (N, n) hidden configurations
    observed: dict           # node -> (training evidence column, test value)

    @property
    def n_nodes(self):
        return self.X.shape[1]

    def values(self, v):
        return np.unique(self.X[:, v])


def random_problem(rng, max_nodes=6, max_card=4, n_samples=200, chain=False) -> DiscreteProblem:
    n = int(rng.integers(2, max_nodes + 1))
    edges = [(i, i + 1) for i in range(n - 1)] if chain else random_tree(n, rng)
    cards = rng.integers(2, max_card + 1, size=n)
    # ancestral sampling from a random tree-structured distribution
    X = np.zeros((n_samples, n), dtype=int)
    X[:, 0] = rng.choice(cards[0], size=n_samples, p=rng.dirichlet(np.ones(cards[0])))
    for a, b in edges:
        T = rng.dirichlet(np.ones(cards[b]) * 0.7, size=cards[a])
        for i in range(n_samples):
            X[i, b] = rng.choice(cards[b], p=T[X[i, a]])
    n_obs = int(rng.integers(1, min(n, 2) + 1))
    observed = {}
    for v in sorted(rng.choice(n, size=n_obs, replace=False).tolist()):
        cy = int(rng.integers(2, 4))
        E = rng.dirichlet(np.ones(cy), size=cards[v])
        y = np.array([rng.choice(cy, p=E[x]) for x in X[:, v]])
        observed[v] = (y, int(rng.choice(np.unique(y))))
    return DiscreteProblem(edges, X, observed)


def oracle_mrf(prob: DiscreteProblem) -> DiscreteMRF:
    """Empirical tree MRF over the values present at each node."""
    vals = [prob.values(v) for v in range(prob.n_nodes)]
    idx = [{x: k for k, x in enumerate(vs)} for vs in vals]
    N = len(prob.X)
    P1 = []
    for v in range(prob.n_nodes):
        P1.append(np.array([np.sum(prob.X[:, v] == x) for x in vals[v]], dtype=float) / N)
    node_pot = [p.copy() for p in P1]
    for v, (y, ystar) in prob.observed.items():
        lik = np.array([np.sum((prob.X[:, v] == x) & (y == ystar)) / np.sum(prob.X[:, v] == x)
                        for x in vals[v]])
        node_pot[v] = node_pot[v] * lik
    edge_pot = {}
    for a, b in prob.edges:
        J = np.zeros((len(vals[a]), len(vals[b])))
        for xa, xb in zip(prob.X[:, a], prob.X[:, b]):
            J[idx[a][xa], idx[b][xb]] += 1.0 / N
        edge_pot[(a, b)] = J / np.outer(P1[a], P1[b])
    return DiscreteMRF([len(v) for v in vals], node_pot, edge_pot)


def kernel_bp_beliefs(prob: DiscreteProblem, lam=1e-12, mode="exact", max_iters=50, tol=1e-12):
    kern = Kronecker()
    edges = [(a, b, k) for k, (a, b) in enumerate(prob.edges)]
    evidence = {v: (np.array([float(ys)]), f"obs{v}") for v, (_, ys) in prob.observed.items()}
    graph = FactorGraph(prob.n_nodes, edges, evidence)
    degrees = graph.template_degrees()
    keep = mode == "exact"
    X = prob.X.astype(float)
    tmpl = {}
    for a, b, k in edges:
        fwd = fit_edge_model((X[:, a], X[:, b]), kern, kern, lam, 1e-6, degrees[k], keep)
        bwd = fit_edge_model((X[:, b], X[:, a]), kern, kern, lam, 1e-6, degrees[k], keep)
        tmpl[k] = EdgeTemplate(fwd, bwd)
    liks = {f"obs{v}": fit_likelihood((X[:, v], y.astype(float)), kern, kern, lam, 1e-6)
            for v, (y, _) in prob.observed.items()}
    templates = Templates(tmpl, liks)
    store = init_messages(graph, templates, mode)
    store, diag = run_bp(graph, templates, store, "synchronous", max_iters, tol)
    out = []
    for v in range(prob.n_nodes):
        cand = prob.values(v).astype(float)
        b = compute_belief(v, store, graph, ParzenMarginal(X[:, v], kern), cand)
        out.append(b.normalized)
    return out, diag


def run_consistency(n_problems=5, seed=0, lam=1e-12, modes=("exact", "linear", "lowrank")):
    """Max abs belief error of kernel BP and discrete BP vs enumeration."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_problems):
        prob = random_problem(rng, chain=bool(i % 2))
        truth = brute_force_marginals(oracle_mrf(prob))
        dbp = discrete_bp(oracle_mrf(prob))
        rows.append(("discrete_bp", i, max(float(np.max(np.abs(a - b))) for a, b in zip(dbp, truth))))
        for mode in modes:
            start = time.perf_counter()
            kb, _ = kernel_bp_beliefs(prob, lam, mode)
            err = max(float(np.max(np.abs(a - b))) for a, b in zip(kb, truth))
            rows.append((f"kbp_{mode}", i, err, time.perf_counter() - start))
    return rows
