"""Result rows shared by every experiment, with CSV and JSON output."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

HEADER = ("method", "param", "metric", "value", "seed")
METRICS = ("rmse", "mae", "mean_cosine", "millis_per_update", "millis_init", "seconds",
           "max_abs_error", "rounds", "threads")


@dataclass(frozen=True)
class ResultRecord:
    method: str
    param: str           # e.g. "colors=100;eps=0.001"
    metric: str
    value: float
    seed: int

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite value for {self.method}/{self.metric}")
        if self.metric in ("rmse", "mae") and self.value < 0:
            raise ValueError(f"{self.metric} must be nonnegative")
        if self.metric == "mean_cosine" and not -1.0 - 1e-12 <= self.value <= 1.0 + 1e-12:
            raise ValueError("mean cosine similarity must lie in [-1, 1]")


def param_string(**kw) -> str:
    return ";".join(f"{k}={v}" for k, v in kw.items())


def write_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for r in records:
            w.writerow([r.method, r.param, r.metric, repr(float(r.value)), r.seed])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ResultRecord(r["method"], r["param"], r["metric"], float(r["value"]), int(r["seed"]))
            for r in rows]


def write_json(path, records):
    with open(path, "w") as fh:
        json.dump([asdict(r) for r in records], fh, indent=1)


def summarize(records) -> list:
    """Mean value per ``(method, param, metric)`` across seeds, sorted."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.method, r.param, r.metric), []).append(r.value)
    return [(m, p, k, sum(v) / len(v), len(v)) for (m, p, k), v in sorted(groups.items())]
