"""Versioned binary model files.

Layout: magic ``b"KBP1"``, little-endian ``uint32`` version, ``uint64`` header
length, a UTF-8 JSON header, then one float64 blob.  Arrays in the header are
``{"offset": int, "shape": [...]}`` references into the blob (offsets in
elements).  Edge models keep only the constant-time blocks; likelihood models
store their training pairs and are refitted on load.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .kernels import kernel_from_dict, kernel_to_dict
from .model import EdgeModel, EdgeTemplate, LikelihoodModel, fit_likelihood

MAGIC = b"KBP1"
VERSION = 1


class _Blob:
    def __init__(self):
        self.parts, self.size = [], 0

    def add(self, a):
        a = np.ascontiguousarray(a, dtype="<f8")
        ref = {"offset": self.size, "shape": list(a.shape)}
        self.parts.append(a.ravel())
        self.size += a.size
        return ref

    def bytes(self):
        return np.concatenate(self.parts).tobytes() if self.parts else b""


def _edge_header(model: EdgeModel, blob):
    return {
        "spec_t": kernel_to_dict(model.spec_t), "spec_s": kernel_to_dict(model.spec_s),
        "lam": model.lam, "degree": model.degree, "m": model.m,
        "tensor_points": blob.add(model.tensor_points),
        "target_points": blob.add(model.target_points),
        "W_ts": blob.add(model.W_ts),
        "K_tensor_cross": blob.add(model.K_tensor_cross),
    }


def _edge_from(h, arr):
    return EdgeModel(
        spec_t=kernel_from_dict(h["spec_t"]), spec_s=kernel_from_dict(h["spec_s"]),
        lam=h["lam"], degree=h["degree"], m=h["m"],
        tensor_points=arr(h["tensor_points"]), target_points=arr(h["target_points"]),
        W_ts=arr(h["W_ts"]), K_tensor_cross=arr(h["K_tensor_cross"]),
    )


def save_models(path, edges: dict, likelihoods: dict | None = None, meta: dict | None = None,
                likelihood_epsilon: float = 1e-3):
    """Write edge templates (``EdgeTemplate`` or bare ``EdgeModel``) and likelihoods."""
    blob = _Blob()
    head = {"version": VERSION, "edges": {}, "likelihoods": {}, "meta": meta or {}}
    for tid, tpl in edges.items():
        fwd, bwd = (tpl.forward, tpl.backward) if isinstance(tpl, EdgeTemplate) else (tpl, None)
        head["edges"][str(tid)] = {
            "forward": _edge_header(fwd, blob),
            "backward": None if bwd is None else _edge_header(bwd, blob),
        }
    for tid, lik in (likelihoods or {}).items():
        eps = lik.basis.epsilon if lik.basis is not None else None
        head["likelihoods"][str(tid)] = {
            "spec_hidden": kernel_to_dict(lik.spec_hidden),
            "spec_evidence": kernel_to_dict(lik.spec_evidence),
            "lam": lik.lam, "epsilon": eps if eps is not None else likelihood_epsilon,
            "hidden": blob.add(lik.hidden), "evidence": blob.add(lik.evidence),
        }
    header = json.dumps(head).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        fh.write(blob.bytes())


def load_models(path):
    """Return ``(edges, likelihoods, meta)``; edges are ``EdgeTemplate`` objects."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a KBP1 model file")
    version, hlen = struct.unpack("<IQ", raw[4:16])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    head = json.loads(raw[16:16 + hlen].decode())
    data = np.frombuffer(raw[16 + hlen:], dtype="<f8")

    def arr(ref):
        n = int(np.prod(ref["shape"], dtype=int))
        return data[ref["offset"]:ref["offset"] + n].reshape(ref["shape"]).copy()

    edges = {}
    for tid, e in head["edges"].items():
        bwd = None if e["backward"] is None else _edge_from(e["backward"], arr)
        edges[tid] = EdgeTemplate(_edge_from(e["forward"], arr), bwd)
    liks = {}
    for tid, h in head["likelihoods"].items():
        liks[tid] = fit_likelihood((arr(h["hidden"]), arr(h["evidence"])),
                                   kernel_from_dict(h["spec_hidden"]),
                                   kernel_from_dict(h["spec_evidence"]), h["lam"], h["epsilon"])
    return edges, liks, head["meta"]
