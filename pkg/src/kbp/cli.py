"""Command-line entry point: ``kbp <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .experiments import records as rec
from .experiments.config import FULL_SCALE, load_config


def _common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--epsilon", help="comma-separated approximation levels")
    p.add_argument("--lambda", dest="lam", type=float, help="ridge parameter")
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", help="comma-separated seeds")
    p.add_argument("--threads", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--colors", help="comma-separated color counts")
    p.add_argument("--methods", help="comma-separated method names")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--json", help="optional JSON mirror of the CSV")


def _config(args, kind):
    keys = ("epsilon", "lam", "iters", "seed", "threads", "size", "colors", "methods", "out", "json")
    over = {k: getattr(args, k, None) for k in keys}
    if over["seed"] is None and not args.config:
        over["seed"] = "0"
    return load_config(args.config, over, kind)


def _emit(records, cfg):
    rec.write_csv(cfg.out, records)
    if cfg.json:
        rec.write_json(cfg.json, records)
    for r in records:
        print(f"{r.method:14s} {r.param:40s} {r.metric:18s} {r.value:.6g} seed={r.seed}")
    print(f"wrote {len(records)} records to {cfg.out}")


def cmd_train(args):
    from .experiments.denoise import fit_kbp, make_denoise_data
    from .experiments.images import write_pgm
    from .graph import grid_graph
    from .serialize import save_models

    cfg = _config(args, "train")
    colors, seed = cfg.colors[0], cfg.seed[0]
    data = make_denoise_data(cfg.size, colors, cfg.sigma, seed)
    h, w = data.shape
    degree = grid_graph(h, w, observations=data.test_noisy.ravel()).template_degrees()["pair"]
    tpl, kern = fit_kbp(data, cfg.lam, cfg.epsilon[0], degree, cfg.bandwidth_scale, seed=seed)
    meta = {"levels": data.levels.tolist(), "parzen_sigma": kern.sigma,
            "parzen_samples": data.clean.ravel().tolist(), "size": cfg.size, "colors": colors}
    save_models(args.model, tpl.edges, tpl.likelihoods, meta)
    print(f"saved model to {args.model}")
    if args.image_dir:
        import os
        os.makedirs(args.image_dir, exist_ok=True)
        write_pgm(os.path.join(args.image_dir, "clean.pgm"), 255 * data.clean)
        write_pgm(os.path.join(args.image_dir, "train_noisy.pgm"), 255 * data.train_noisy)
        write_pgm(os.path.join(args.image_dir, "test_noisy.pgm"), 255 * data.test_noisy)


def cmd_denoise(args):
    cfg = _config(args, "denoise")
    if args.full:
        cfg = cfg.with_overrides(**FULL_SCALE)
    if args.model:
        from .engine import Templates, init_messages, map_estimates, run_bp
        from .experiments.images import read_pgm, write_pgm
        from .graph import grid_graph
        from .kernels import RBF
        from .model import ParzenMarginal
        from .serialize import load_models

        if not (args.input and args.output):
            sys.exit("--model needs --input and --output images")
        edges, liks, meta = load_models(args.model)
        img = read_pgm(args.input) / 255.0
        h, w = img.shape
        graph = grid_graph(h, w, "pair", img.ravel(), "obs")
        tpl = Templates(edges, liks)
        store = init_messages(graph, tpl, "lowrank")
        store, diag = run_bp(graph, tpl, store, "synchronous", cfg.iters, 0.0, cfg.threads)
        levels = np.array(meta["levels"])
        parzen = ParzenMarginal(np.array(meta["parzen_samples"]), RBF(meta["parzen_sigma"]))
        idx = map_estimates(graph, store, parzen, levels)
        write_pgm(args.output, 255 * levels[idx].reshape(h, w))
        print(f"denoised {args.input} -> {args.output} in {len(diag.rounds)} rounds")
        return
    from .experiments.denoise import run_denoising
    _emit(run_denoising(cfg), cfg)


def cmd_chain(args):
    from .experiments.chain import run_sphere_chain
    cfg = _config(args, "chain")
    _emit(run_sphere_chain(cfg), cfg)


def cmd_bench(args):
    from .experiments.bench import bench_scaling
    cfg = _config(args, "bench")
    if args.m_values:
        cfg = cfg.with_overrides(m_values=args.m_values)
    _emit(bench_scaling(cfg.m_values, cfg.ell_cap, cfg.degree, cfg.seed[0], cfg.repeats), cfg)


def cmd_consistency(args):
    from .experiments.consistency import run_consistency
    cfg = _config(args, "consistency")
    lam = args.lam if args.lam is not None else 1e-12
    out = []
    for row in run_consistency(args.problems, cfg.seed[0], lam):
        method, k, err = row[:3]
        out.append(rec.ResultRecord(method, rec.param_string(problem=k, lam=lam), "max_abs_error",
                                    err, cfg.seed[0]))
        if len(row) > 3:
            out.append(rec.ResultRecord(method, rec.param_string(problem=k, lam=lam), "seconds",
                                        row[3], cfg.seed[0]))
    _emit(out, cfg)


def cmd_report(args):
    rows = []
    for path in args.inputs:
        rows += rec.read_csv(path)
    print(f"{'method':14s} {'param':40s} {'metric':18s} {'mean':>12s} {'n':>3s}")
    for method, param, metric, mean, n in rec.summarize(rows):
        print(f"{method:14s} {param:40s} {metric:18s} {mean:12.6g} {n:3d}")


def build_parser():
    ap = argparse.ArgumentParser(prog="kbp", description="Kernel belief propagation experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit denoising templates and save a KBP1 model")
    _common(p)
    p.add_argument("--model", default="model.kbp")
    p.add_argument("--image-dir", help="also write clean/noisy PGMs here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="run the denoising experiment or apply a saved model")
    _common(p)
    p.add_argument("--model", help="KBP1 model from 'train'")
    p.add_argument("--input", help="noisy PGM (with --model)")
    p.add_argument("--output", help="output PGM (with --model)")
    p.add_argument("--full", action="store_true", help="100x100 images over 11 color counts")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("chain", help="sphere-valued chain experiment")
    _common(p)
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("bench", help="per-update timing as m grows")
    _common(p)
    p.add_argument("--m-values", help="comma-separated training sizes")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("consistency", help="kernel BP vs enumeration on discrete trees")
    _common(p)
    p.add_argument("--problems", type=int, default=5)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("report", help="aggregate result CSVs")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
