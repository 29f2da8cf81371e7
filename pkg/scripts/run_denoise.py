"""Ring-image denoising at desk scale: noisy input vs KBP (linear, constant) vs discrete BP.

    python scripts/run_denoise.py --colors 10,100 --seeds 0,1 --out denoise.csv
"""

import argparse

from kbp.experiments import records
from kbp.experiments.config import ExperimentConfig
from kbp.experiments.denoise import run_denoising


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=50)
    ap.add_argument("--colors", default="100")
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--methods", default="kbp_linear,kbp_constant,discrete")
    ap.add_argument("--out", default="denoise.csv")
    args = ap.parse_args()
    cfg = ExperimentConfig.for_kind("denoise", seed=args.seeds, size=args.size,
                                    colors=args.colors, methods=args.methods)
    recs = run_denoising(cfg)
    records.write_csv(args.out, recs)
    for method, param, metric, mean, n in records.summarize(recs):
        if metric == "rmse":
            print(f"{method:14s} {param:45s} rmse={mean:.3f} (n={n})")


if __name__ == "__main__":
    main()
