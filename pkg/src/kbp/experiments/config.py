"""Flat ``key=value`` experiment configuration with command-line overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

KINDS = ("denoise", "chain", "bench", "consistency", "train")
DENOISE_METHODS = ("kbp_exact", "kbp_linear", "kbp_constant", "discrete", "particle")
CHAIN_METHODS = ("kbp", "particle", "marginal")
FULL_SCALE = {"size": 100, "colors": (10, 25, 50, 75, 100, 125, 150, 175, 200, 225, 250)}

# tuned per experiment kind; explicit keys always win
KIND_DEFAULTS = {
    "denoise": {"lam": 1e-3, "bandwidth_scale": 16.0,
                "methods": ("kbp_linear", "kbp_constant", "discrete")},
    "train": {"lam": 1e-3, "bandwidth_scale": 16.0},
    "chain": {"bandwidth_scale": 4.0, "methods": ("kbp", "particle", "marginal")},
}

# element types of the list-valued keys
_LISTS = {"seed": int, "colors": int, "methods": str, "epsilon": float, "m_values": int}
_ALIASES = {"lambda": "lam", "seeds": "seed"}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: tuple
    size: int = 50
    colors: tuple = (10, 100)
    sigma: float = 30.0
    methods: tuple = ("kbp_linear", "kbp_constant", "discrete")
    epsilon: tuple = (1e-3,)
    lam: float = 1e-4
    iters: int = 30
    threads: int = 1
    bandwidth_scale: float = 1.0
    max_exact_pairs: int = 400
    particles: int = 30
    resample_every: int = 15
    lscde_centers: int = 100
    chain_length: int = 100
    train_chains: int = 10
    feature_dim: int = 20
    obs_noise: float = 1.0
    trans_noise: float = 0.15
    clusters: int = 6
    sphere_sigma: float = 10.0
    stay: float = 0.9
    m_values: tuple = (2000, 4000)
    ell_cap: int = 50
    degree: int = 2
    repeats: int = 5
    model: str = ""
    out: str = "results.csv"
    json: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.seed:
            raise ValueError("at least one seed is required")
        bad = [m for m in self.methods if m not in DENOISE_METHODS + CHAIN_METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        if self.iters < 0 or self.threads < 1 or self.size < 8:
            raise ValueError("iters >= 0, threads >= 1 and size >= 8 required")

    def with_overrides(self, **kw):
        return replace(self, **coerce(kw))

    @classmethod
    def for_kind(cls, kind, **kw):
        """Construct with the kind's tuned defaults under ``kw``."""
        vals = dict(KIND_DEFAULTS.get(kind, {}))
        vals.update(coerce(kw))
        return cls(kind=kind, **vals)


def _convert(key, raw):
    if key in _LISTS:
        if isinstance(raw, (list, tuple)):
            return tuple(_LISTS[key](v) for v in raw)
        return tuple(_LISTS[key](v.strip()) for v in str(raw).split(",") if v.strip())
    kind = {f.name: type(f.default) for f in fields(ExperimentConfig) if f.name not in ("kind", "seed")}
    if key == "kind":
        return str(raw).strip()
    if key not in kind:
        raise KeyError(f"unknown config key {key!r}")
    return kind[key](str(raw).strip()) if not isinstance(raw, kind[key]) else raw


def coerce(values: dict) -> dict:
    out = {}
    for k, v in values.items():
        if v is None:
            continue
        key = _ALIASES.get(k, k)
        out[key] = _convert(key, v)
    return out


def parse_config_text(text: str) -> dict:
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    return values


def load_config(path=None, overrides: dict | None = None, kind: str | None = None) -> ExperimentConfig:
    """Read ``path`` (optional), apply ``overrides`` and validate.

    Required keys are ``kind`` (may come from ``kind``) and ``seed``.
    """
    values = {}
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if kind is not None:
        values.setdefault("kind", kind)
    vals = coerce(values)
    for req in ("kind", "seed"):
        if req not in vals:
            raise ValueError(f"missing required config key {req!r}")
    return ExperimentConfig.for_kind(vals.pop("kind"), **vals)
