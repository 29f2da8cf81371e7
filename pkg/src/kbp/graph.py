"""Pairwise MRF structure: nodes, templated edges and evidence bindings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class FactorGraph:
    n_nodes: int
    edges: list = field(default_factory=list)       # (a, b, template_id)
    evidence: dict = field(default_factory=dict)    # node -> (observed, template_id)
    domains: dict = field(default_factory=dict)     # node -> domain tag

    def __post_init__(self):
        self.edges = [(int(a), int(b), tid) for a, b, tid in self.edges]
        self._nbrs = [[] for _ in range(self.n_nodes)]
        seen = set()
        for k, (a, b, _) in enumerate(self.edges):
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
                raise ValueError(f"edge ({a}, {b}) references a missing node")
            if (min(a, b), max(a, b)) in seen:
                raise ValueError(f"duplicate edge ({a}, {b})")
            seen.add((min(a, b), max(a, b)))
            self._nbrs[a].append((b, k))
            self._nbrs[b].append((a, k))
        for node, (obs, _) in self.evidence.items():
            if not 0 <= node < self.n_nodes:
                raise ValueError(f"evidence on missing node {node}")

    def neighbors(self, node):
        return [u for u, _ in self._nbrs[node]]

    def edge_between(self, t, s):
        for u, k in self._nbrs[t]:
            if u == s:
                return k
        raise KeyError(f"no edge between {t} and {s}")

    def degree(self, node) -> int:
        """Graph neighbours plus one for an attached observation."""
        return len(self._nbrs[node]) + (node in self.evidence)

    @property
    def max_degree(self) -> int:
        return max((self.degree(v) for v in range(self.n_nodes)), default=0)

    def directed_edges(self):
        """All ``(t, s)`` message directions in edge declaration order."""
        out = []
        for a, b, _ in self.edges:
            out.append((a, b))
            out.append((b, a))
        return out

    def template_of(self, t, s):
        """Template id and whether ``t -> s`` runs against the declared orientation."""
        a, b, tid = self.edges[self.edge_between(t, s)]
        return tid, (t, s) != (a, b)

    def template_degrees(self) -> dict:
        """Tensor degree per edge template: max over its senders of ``d_t - 1``."""
        out: dict = {}
        for t, s in self.directed_edges():
            tid, _ = self.template_of(t, s)
            out[tid] = max(out.get(tid, 1), self.degree(t) - 1)
        return out

    def check_templates(self, edge_templates, likelihood_templates=()):
        for _, _, tid in self.edges:
            if tid not in edge_templates:
                raise KeyError(f"missing edge template {tid!r}")
        for _, (_, tid) in self.evidence.items():
            if tid not in likelihood_templates:
                raise KeyError(f"missing likelihood template {tid!r}")


def grid_graph(height, width, template="pair", observations=None, obs_template="obs"):
    """4-connected grid; node ``i * width + j``; optional per-pixel evidence."""
    edges = []
    for i in range(height):
        for j in range(width):
            v = i * width + j
            if j + 1 < width:
                edges.append((v, v + 1, template))
            if i + 1 < height:
                edges.append((v, v + width, template))
    evidence = {}
    if observations is not None:
        obs = np.asarray(observations, dtype=float).reshape(height * width, -1)
        evidence = {v: (obs[v], obs_template) for v in range(height * width)}
    return FactorGraph(height * width, edges, evidence)


def chain_graph(n, template="pair", observations=None, obs_template="obs"):
    edges = [(i, i + 1, template) for i in range(n - 1)]
    evidence = {}
    if observations is not None:
        obs = np.asarray(observations, dtype=float).reshape(n, -1)
        evidence = {v: (obs[v], obs_template) for v in range(n)}
    return FactorGraph(n, edges, evidence)


def random_tree(n, rng):
    """Uniform random recursive tree on ``n`` nodes as an edge list."""
    return [(int(rng.integers(0, v)), v) for v in range(1, n)]
