"""Chains of unit-sphere states observed through noisy linear features.

Hidden states cluster around a few random directions on the sphere and a
sticky Markov chain moves between clusters.  Each state ``x`` emits
``y = A x + noise`` with a fixed random ``A``.  Training uses several chains;
the test chain is drawn with a different seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..baselines.lscde import fit_conditional_density_ls
from ..baselines.particle import init_particles, particle_bp
from ..engine import Templates, init_messages, map_estimates, run_bp
from ..graph import chain_graph
from ..kernels import RBF, Sphere, median_heuristic
from ..model import EdgeTemplate, ParzenMarginal, fit_edge_model, fit_likelihood
from .config import CHAIN_METHODS, ExperimentConfig
from .records import ResultRecord, param_string

TEST_SEED_OFFSET = 104729
MAX_CANDIDATES = 600


def unit_rows(X):
    X = np.asarray(X, dtype=float)
    n = np.linalg.norm(X, axis=-1, keepdims=True)
    return X / np.where(n > 0, n, 1.0)


@dataclass
class SphereChainModel:
    centers: np.ndarray        # (k, 3)
    A: np.ndarray              # (feature_dim, 3)
    stay: float
    trans_noise: float
    obs_noise: float

    @classmethod
    def random(cls, rng, clusters=6, feature_dim=20, stay=0.9, trans_noise=0.15, obs_noise=1.0):
        centers = unit_rows(rng.standard_normal((clusters, 3)))
        A = rng.standard_normal((feature_dim, 3))
        return cls(centers, A, stay, trans_noise, obs_noise)

    def sample(self, length, rng):
        """One chain: ``(states (length, 3), features (length, feature_dim))``."""
        k = len(self.centers)
        c = int(rng.integers(k))
        X = np.empty((length, 3))
        for i in range(length):
            if i and rng.random() >= self.stay:
                c = int(rng.integers(k))
            X[i] = unit_rows(self.centers[c] + self.trans_noise * rng.standard_normal(3))
        Y = X @ self.A.T + self.obs_noise * rng.standard_normal((length, len(self.A)))
        return X, Y


def mean_cosine(X, Xhat) -> float:
    return float(np.mean(np.sum(unit_rows(X) * unit_rows(Xhat), axis=1)))


@dataclass
class ChainData:
    train_x: list
    train_y: list
    test_x: np.ndarray
    test_y: np.ndarray

    def pairs(self):
        """Consecutive ``(x_t, x_s)`` pairs in both orientations."""
        a = np.vstack([x[:-1] for x in self.train_x])
        b = np.vstack([x[1:] for x in self.train_x])
        return np.vstack([a, b]), np.vstack([b, a])


def make_chain_data(cfg: ExperimentConfig, seed) -> ChainData:
    rng = np.random.default_rng(seed)
    model = SphereChainModel.random(rng, cfg.clusters, cfg.feature_dim, cfg.stay,
                                    cfg.trans_noise, cfg.obs_noise)
    train = [model.sample(cfg.chain_length, rng) for _ in range(cfg.train_chains)]
    tx, ty = model.sample(cfg.chain_length, np.random.default_rng(seed + TEST_SEED_OFFSET))
    return ChainData([x for x, _ in train], [y for _, y in train], tx, ty)


def candidates(data: ChainData, seed):
    X = np.unique(np.vstack(data.train_x), axis=0)
    if len(X) > MAX_CANDIDATES:
        X = X[np.sort(np.random.default_rng(seed).choice(len(X), MAX_CANDIDATES, replace=False))]
    return X


def kbp_chain(data: ChainData, cfg: ExperimentConfig, seed):
    hidden = np.vstack(data.train_x)
    ks = Sphere(cfg.sphere_sigma)
    ke = RBF(cfg.bandwidth_scale * median_heuristic(np.vstack(data.train_y)))
    kp = RBF(cfg.bandwidth_scale * median_heuristic(hidden))
    n = len(data.test_x)
    graph = chain_graph(n, "pair", data.test_y, "obs")
    degree = graph.template_degrees()["pair"]
    edge = fit_edge_model(data.pairs(), ks, ks, cfg.lam, cfg.epsilon[0], degree)
    lik = fit_likelihood((hidden, np.vstack(data.train_y)), ks, ke, cfg.lam, cfg.epsilon[0])
    tpl = Templates({"pair": EdgeTemplate(edge)}, {"obs": lik})
    store = init_messages(graph, tpl, "lowrank")
    store, diag = run_bp(graph, tpl, store, "synchronous", cfg.iters, 1e-8, cfg.threads)
    C = candidates(data, seed)
    idx = map_estimates(graph, store, ParzenMarginal(hidden, kp), C)
    return C[idx], diag


def marginal_mode(data: ChainData, cfg: ExperimentConfig, seed):
    """Parzen mode over the candidates, predicted at every node."""
    hidden = np.vstack(data.train_x)
    C = candidates(data, seed)
    dens = ParzenMarginal(hidden, RBF(cfg.bandwidth_scale * median_heuristic(hidden))).density(C)
    return np.repeat(C[int(np.argmax(dens))][None, :], len(data.test_x), axis=0)


def particle_chain(data: ChainData, cfg: ExperimentConfig, seed):
    hidden = np.vstack(data.train_x)
    feats = np.vstack(data.train_y)
    kp = RBF(cfg.bandwidth_scale * median_heuristic(hidden))
    hx = float(np.sqrt(0.5 / kp.sigma))
    hy = float(np.sqrt(0.5 / (cfg.bandwidth_scale * median_heuristic(feats))))
    xt, xs = data.pairs()
    pair = fit_conditional_density_ls((xs, xt), min(cfg.lscde_centers, len(xt)), hx, 1e-3, seed)
    lik = fit_conditional_density_ls((hidden, feats), min(cfg.lscde_centers, len(hidden)),
                                     (hx, hy), 1e-3, seed)
    graph = chain_graph(len(data.test_x), "pair", data.test_y, "obs")
    marg = ParzenMarginal(hidden, kp)
    parts = init_particles(graph, hidden, cfg.particles, seed, marg)
    res = particle_bp(graph, {"pair": pair, "obs": lik}, parts, cfg.iters, cfg.resample_every,
                      seed, marg, step=hx, project=unit_rows)
    return np.array([bl.map_point for bl in res.beliefs])


def run_sphere_chain(cfg: ExperimentConfig) -> list:
    bad = [m for m in cfg.methods if m not in CHAIN_METHODS]
    if bad:
        raise ValueError(f"unknown chain methods {bad}")
    records = []
    for seed in cfg.seed:
        data = make_chain_data(cfg, seed)
        param = param_string(length=cfg.chain_length, obs_noise=cfg.obs_noise,
                             trans_noise=cfg.trans_noise)
        for method in cfg.methods:
            t0 = time.perf_counter()
            extra = []
            if method == "kbp":
                est, diag = kbp_chain(data, cfg, seed)
                extra = [("rounds", len(diag.rounds)),
                         ("millis_per_update", 1000 * diag.seconds_per_update)]
            elif method == "particle":
                est = particle_chain(data, cfg, seed)
            else:
                est = marginal_mode(data, cfg, seed)
            sec = time.perf_counter() - t0
            records.append(ResultRecord(method, param, "mean_cosine", mean_cosine(data.test_x, est), seed))
            records.append(ResultRecord(method, param, "seconds", sec, seed))
            records += [ResultRecord(method, param, k, v, seed) for k, v in extra]
    return records
