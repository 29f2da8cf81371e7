"""Grid denoising of synthetic ring images.

One clean/noisy training pair is generated per color count.  Edge templates
are learned from all adjacent clean pixel pairs (both orientations pooled
into one symmetric template); the likelihood from (clean, noisy) pixel
pairs.  A second noisy copy of the clean image is the test input.  Gray
values are scaled to ``[0, 1]`` internally and reported in gray levels.

The discrete and particle baselines learn their pair potentials from the
same clean image but are handed the true Gaussian observation model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..baselines.discrete import DiscreteMRF, discrete_bp
from ..baselines.lscde import fit_conditional_density_ls
from ..baselines.particle import GaussianNoise, init_particles, particle_bp
from ..engine import Templates, init_messages, map_estimates, run_bp
from ..graph import grid_graph
from ..kernels import RBF, median_heuristic
from ..model import EdgeTemplate, ParzenMarginal, fit_edge_model, fit_likelihood
from .config import DENOISE_METHODS, ExperimentConfig
from .images import add_gaussian_noise, generate_ring_image, mae, rmse
from .records import ResultRecord, param_string

TEST_SEED_OFFSET = 7919
KBP_MODES = {"kbp_exact": "exact", "kbp_linear": "linear", "kbp_constant": "lowrank"}


@dataclass
class DenoiseData:
    clean: np.ndarray          # (h, w) in [0, 1]
    train_noisy: np.ndarray
    test_noisy: np.ndarray
    levels: np.ndarray         # candidate clean values

    @property
    def shape(self):
        return self.clean.shape


def make_denoise_data(size, colors, sigma, seed) -> DenoiseData:
    img = generate_ring_image(size, size, colors)
    clean = img.pixels / 255.0
    train = add_gaussian_noise(img, sigma, seed) / 255.0
    test = add_gaussian_noise(img, sigma, seed + TEST_SEED_OFFSET) / 255.0
    return DenoiseData(clean, train, test, np.unique(clean))


def adjacent_pairs(img):
    """All 4-neighbour pairs ``(x_t, x_s)`` in both orientations."""
    a = np.concatenate([img[:, :-1].ravel(), img[:-1, :].ravel()])
    b = np.concatenate([img[:, 1:].ravel(), img[1:, :].ravel()])
    return np.concatenate([a, b]), np.concatenate([b, a])


def kernels_for(data: DenoiseData, scale=1.0):
    """Median-heuristic RBF kernels for clean values and noisy observations."""
    kh = RBF(scale * median_heuristic(data.clean.ravel()))
    ke = RBF(scale * median_heuristic(data.train_noisy.ravel()))
    return kh, ke


def fit_kbp(data: DenoiseData, lam, epsilon, degree, scale=1.0, max_pairs=None,
            keep_full_rank=False, seed=0):
    kh, ke = kernels_for(data, scale)
    xt, xs = _subsample(adjacent_pairs(data.clean), max_pairs, seed)
    hid, obs = _subsample((data.clean.ravel(), data.train_noisy.ravel()), max_pairs, seed + 1)
    edge = fit_edge_model((xt, xs), kh, kh, lam, epsilon, degree, keep_full_rank)
    lik = fit_likelihood((hid, obs), kh, ke, lam, epsilon)
    return Templates({"pair": EdgeTemplate(edge)}, {"obs": lik}), kh


def _subsample(pairs, max_pairs, seed):
    a, b = pairs
    if max_pairs is None or len(a) <= max_pairs:
        return a, b
    idx = np.sort(np.random.default_rng(seed).choice(len(a), max_pairs, replace=False))
    return a[idx], b[idx]


def kbp_denoise(data: DenoiseData, templates: Templates, kernel, mode, iters, threads=1):
    """MAP image over the clean levels plus BP diagnostics."""
    h, w = data.shape
    graph = grid_graph(h, w, "pair", data.test_noisy.ravel(), "obs")
    store = init_messages(graph, templates, mode)
    store, diag = run_bp(graph, templates, store, "synchronous", iters, 0.0, threads)
    idx = map_estimates(graph, store, ParzenMarginal(data.clean.ravel(), kernel), data.levels)
    return data.levels[idx].reshape(h, w), diag


def discrete_denoise(data: DenoiseData, iters, sigma, smoothing=1e-6):
    """Discrete BP over the clean levels: empirical pair tables, known Gaussian noise ``sigma``."""
    h, w = data.shape
    lv = data.levels
    code = {v: k for k, v in enumerate(lv)}
    C = np.vectorize(code.get)(data.clean)
    a, b = adjacent_pairs(C)
    J = np.zeros((len(lv), len(lv)))
    np.add.at(J, (a.astype(int), b.astype(int)), 1.0)
    J = J / J.sum() + smoothing
    p = J.sum(axis=1)
    pair = J / np.outer(p, p)
    s2 = max(sigma, 1e-3) ** 2
    Y = data.test_noisy.ravel()
    node_pot = [p * np.exp(-(y - lv) ** 2 / (2 * s2)) + 1e-300 for y in Y]
    graph = grid_graph(h, w)
    mrf = DiscreteMRF([len(lv)] * (h * w), node_pot, {(s, t): pair for s, t, _ in graph.edges})
    beliefs = discrete_bp(mrf, iters, 0.0)
    return lv[np.array([int(np.argmax(bv)) for bv in beliefs])].reshape(h, w)


def particle_denoise(data: DenoiseData, cfg: ExperimentConfig, seed):
    h, w = data.shape
    kh, _ = kernels_for(data, cfg.bandwidth_scale)
    hh = np.sqrt(0.5 / kh.sigma)
    xt, xs = adjacent_pairs(data.clean)
    b = min(cfg.lscde_centers, len(xt))
    pair = fit_conditional_density_ls((xs, xt), b, (hh, hh), 1e-3, seed)
    lik = GaussianNoise(max(cfg.sigma, 1e-3) / 255.0)
    graph = grid_graph(h, w, "pair", data.test_noisy.ravel(), "obs")
    marg = ParzenMarginal(data.clean.ravel(), kh)
    parts = init_particles(graph, data.clean.ravel(), cfg.particles, seed, marg)
    res = particle_bp(graph, {"pair": pair, "obs": lik}, parts, cfg.iters, cfg.resample_every,
                      seed, marg, step=hh)
    est = np.array([float(bl.map_point[0]) for bl in res.beliefs])
    snapped = data.levels[np.argmin(np.abs(est[:, None] - data.levels[None, :]), axis=1)]
    return snapped.reshape(h, w)


def _score(method, param, seed, est, data, seconds, extra=()):
    out = [
        ResultRecord(method, param, "rmse", rmse(255 * est, 255 * data.clean), seed),
        ResultRecord(method, param, "mae", mae(255 * est, 255 * data.clean), seed),
        ResultRecord(method, param, "seconds", seconds, seed),
    ]
    return out + [ResultRecord(method, param, k, v, seed) for k, v in extra]


def run_denoising(cfg: ExperimentConfig) -> list:
    """Every configured method on every (colors, seed); returns ResultRecords."""
    bad = [m for m in cfg.methods if m not in DENOISE_METHODS]
    if bad:
        raise ValueError(f"unknown denoising methods {bad}")
    records = []
    for colors in cfg.colors:
        for seed in cfg.seed:
            data = make_denoise_data(cfg.size, colors, cfg.sigma, seed)
            base = param_string(size=cfg.size, colors=colors, sigma=cfg.sigma)
            records += _score("noisy", base, seed, data.test_noisy, data, 0.0)
            h, w = data.shape
            degree = grid_graph(h, w, observations=data.test_noisy.ravel()).template_degrees()["pair"]
            for method in cfg.methods:
                if method in KBP_MODES:
                    exact = method == "kbp_exact"
                    for eps in ((cfg.epsilon[0],) if exact else cfg.epsilon):
                        param = base + ";" + param_string(eps=eps, lam=cfg.lam)
                        t0 = time.perf_counter()
                        tpl, kern = fit_kbp(data, cfg.lam, eps, degree, cfg.bandwidth_scale,
                                            cfg.max_exact_pairs if exact else None, exact, seed)
                        t1 = time.perf_counter()
                        est, diag = kbp_denoise(data, tpl, kern, KBP_MODES[method], cfg.iters,
                                                cfg.threads)
                        t2 = time.perf_counter()
                        records += _score(method, param, seed, est, data, t2 - t0, [
                            ("millis_init", 1000 * (t1 - t0)),
                            ("millis_per_update", 1000 * diag.seconds_per_update),
                            ("rounds", len(diag.rounds)),
                            ("threads", cfg.threads),
                        ])
                elif method == "discrete":
                    t0 = time.perf_counter()
                    est = discrete_denoise(data, cfg.iters, cfg.sigma / 255.0)
                    records += _score(method, base, seed, est, data, time.perf_counter() - t0)
                elif method == "particle":
                    t0 = time.perf_counter()
                    est = particle_denoise(data, cfg, seed)
                    param = base + ";" + param_string(b=cfg.particles)
                    records += _score(method, param, seed, est, data, time.perf_counter() - t0)
    return records
