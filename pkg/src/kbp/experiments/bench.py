"""Per-update cost of exact and constant-time message updates as ``m`` grows."""

from __future__ import annotations

import time

import numpy as np

from ..engine import GramCache, make_message, update_message_approx, update_message_exact
from ..kernels import RBF, median_heuristic
from ..model import fit_edge_model
from .records import ResultRecord, param_string


def synthetic_pairs(m, rng, dim=2, noise=0.3):
    xs = rng.standard_normal((m, dim))
    return xs + noise * rng.standard_normal((m, dim)), xs


def _random_incoming(model, mode, degree, rng):
    sup = model.support(mode)
    return [make_message(u, "t", mode, rng.standard_normal(len(sup)), sup) for u in range(degree)]


def time_updates(update, n, repeats) -> float:
    """Median over ``repeats`` of the mean seconds per call across ``n`` calls."""
    update()                                  # warm caches
    per = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(n):
            update()
        per.append((time.perf_counter() - t0) / n)
    return float(np.median(per))


def bench_scaling(m_values, ell_cap=50, degree=2, seed=0, repeats=5, n_approx=1000,
                  n_exact=100, epsilon=1e-12) -> list:
    """Timing records for each ``m``: init, then constant-time, linear and exact update cost."""
    m_values = list(m_values)
    if m_values != sorted(m_values):
        raise ValueError("m_values must be ascending")
    rng = np.random.default_rng(seed)
    xt_all, xs_all = synthetic_pairs(max(m_values), rng)
    kern = RBF(median_heuristic(xs_all[:2000]))
    records = []
    for m in m_values:
        xt, xs = xt_all[:m], xs_all[:m]
        param = param_string(m=m, ell_cap=ell_cap, degree=degree)
        init = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fit_edge_model((xt, xs), kern, kern, 1e-4, epsilon, degree, False, ell_cap)
            init.append(time.perf_counter() - t0)
        model = fit_edge_model((xt, xs), kern, kern, 1e-4, epsilon, degree, True, ell_cap)
        cache = GramCache()
        inc_a = _random_incoming(model, "lowrank", degree, rng)
        inc_l = _random_incoming(model, "linear", degree, rng)
        inc_e = _random_incoming(model, "exact", degree, rng)
        t_a = time_updates(lambda: update_message_approx(("t", "s"), inc_a, model, cache), n_approx, repeats)
        t_l = time_updates(lambda: update_message_approx(("t", "s"), inc_l, model, cache, "linear"),
                           n_exact, repeats)
        t_e = time_updates(lambda: update_message_exact(("t", "s"), inc_e, model, cache), n_exact, repeats)
        records += [
            ResultRecord("init", param, "millis_init", 1000 * float(np.median(init)), seed),
            ResultRecord("approx", param, "millis_per_update", 1000 * t_a, seed),
            ResultRecord("linear", param, "millis_per_update", 1000 * t_l, seed),
            ResultRecord("exact", param, "millis_per_update", 1000 * t_e, seed),
        ]
    return records


def growth(records, method, metric="millis_per_update") -> list:
    """Ratios of successive values for ``method`` in record order."""
    vals = [r.value for r in records if r.method == method and r.metric == metric]
    return [b / a for a, b in zip(vals, vals[1:])]
