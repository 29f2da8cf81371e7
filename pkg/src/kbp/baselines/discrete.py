"""Discrete sum-product BP and an exhaustive enumeration oracle."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

MAX_STATES = 10 ** 7


@dataclass
class DiscreteMRF:
    cards: list
    node_pot: list                                  # node -> (card,) table
    edge_pot: dict = field(default_factory=dict)    # (s, t) -> (card_s, card_t) table

    def __post_init__(self):
        self.node_pot = [np.asarray(p, dtype=float) for p in self.node_pot]
        self.edge_pot = {(int(s), int(t)): np.asarray(p, dtype=float)
                         for (s, t), p in self.edge_pot.items()}
        if len(self.node_pot) != len(self.cards):
            raise ValueError("one node table per node required")
        for v, p in enumerate(self.node_pot):
            if p.shape != (self.cards[v],) or np.any(p < 0) or not np.any(p > 0):
                raise ValueError(f"bad node table at {v}")
        for (s, t), p in self.edge_pot.items():
            if p.shape != (self.cards[s], self.cards[t]) or np.any(p < 0):
                raise ValueError(f"bad edge table at ({s}, {t})")
            if not (np.all(p.max(axis=1) > 0) and np.all(p.max(axis=0) > 0)):
                raise ValueError(f"edge table ({s}, {t}) has an all-zero row or column")
        self._nbrs = [[] for _ in self.cards]
        for (s, t) in self.edge_pot:
            self._nbrs[s].append(t)
            self._nbrs[t].append(s)

    @property
    def n_nodes(self):
        return len(self.cards)

    def neighbors(self, v):
        return list(self._nbrs[v])

    def table(self, s, t):
        """Edge table oriented as ``(x_s, x_t)``."""
        if (s, t) in self.edge_pot:
            return self.edge_pot[(s, t)]
        return self.edge_pot[(t, s)].T


def discrete_bp(mrf: DiscreteMRF, max_iters=100, tol=1e-12):
    """Synchronous sum-product with L1-normalised messages; returns beliefs."""
    msgs = {}
    for (s, t) in mrf.edge_pot:
        msgs[(s, t)] = np.full(mrf.cards[t], 1.0 / mrf.cards[t])
        msgs[(t, s)] = np.full(mrf.cards[s], 1.0 / mrf.cards[s])
    nbrs = [mrf.neighbors(v) for v in range(mrf.n_nodes)]
    for _ in range(max_iters):
        new = {}
        for (t, s) in msgs:
            pre = mrf.node_pot[t].copy()
            for u in nbrs[t]:
                if u != s:
                    pre *= msgs[(u, t)]
            out = mrf.table(s, t) @ pre
            z = out.sum()
            if not z > 0:
                raise FloatingPointError(f"all-zero message {t}->{s}")
            new[(t, s)] = out / z
        delta = max((np.max(np.abs(new[k] - msgs[k])) for k in msgs), default=0.0)
        msgs = new
        if delta <= tol:
            break
    beliefs = []
    for v in range(mrf.n_nodes):
        b = mrf.node_pot[v].copy()
        for u in nbrs[v]:
            b *= msgs[(u, v)]
        beliefs.append(b / b.sum())
    return beliefs


def _joint_weight(mrf, x):
    w = 1.0
    for v, p in enumerate(mrf.node_pot):
        w *= p[x[v]]
    for (s, t), p in mrf.edge_pot.items():
        w *= p[x[s], x[t]]
    return w


def brute_force_marginals(mrf: DiscreteMRF, order=None):
    """Exact node marginals by enumerating every joint state.

    ``order`` permutes the enumeration nesting; results must not depend on it.
    """
    n_states = int(np.prod(mrf.cards, dtype=float))
    if n_states > MAX_STATES:
        raise ValueError(f"state space of {n_states} exceeds {MAX_STATES}")
    order = list(range(mrf.n_nodes)) if order is None else list(order)
    marg = [np.zeros(c) for c in mrf.cards]
    Z = 0.0
    x = [0] * mrf.n_nodes
    for states in itertools.product(*[range(mrf.cards[v]) for v in order]):
        for v, val in zip(order, states):
            x[v] = val
        w = _joint_weight(mrf, x)
        Z += w
        for v in range(mrf.n_nodes):
            marg[v][x[v]] += w
    if not Z > 0:
        raise ValueError("partition function is zero")
    return [mv / Z for mv in marg]


def load_discrete_mrf(nodes_csv, edges_csv) -> DiscreteMRF:
    """Read tables from CSV.

    ``nodes_csv`` rows: ``node,p_0,p_1,...``.  ``edges_csv`` rows:
    ``s,t,card_s,card_t,v_00,v_01,...`` (row-major over ``(x_s, x_t)``).
    """
    def rows(path):
        with open(path, newline="") as fh:
            for r in csv.reader(fh):
                if r and not r[0].strip().startswith("#"):
                    try:
                        yield [float(v) for v in r]
                    except ValueError:
                        continue

    node_rows = sorted(rows(nodes_csv), key=lambda r: r[0])
    node_pot = [np.array(r[1:]) for r in node_rows]
    cards = [len(p) for p in node_pot]
    edge_pot = {}
    for r in rows(edges_csv):
        s, t, cs, ct = (int(v) for v in r[:4])
        edge_pot[(s, t)] = np.array(r[4:]).reshape(cs, ct)
    return DiscreteMRF(cards, node_pot, edge_pot)
