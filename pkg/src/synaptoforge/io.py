"""JSON persistence for genotypes, sampled agents and masks.

Floats are written with 17 significant digits, which round-trips every
float64 exactly. Per-layer blocks are stored as lists of row-major matrices.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .core import BLOCK_NAMES, Genotype, ModelDims, param_count
from .sampler import SampledAgent

FORMAT_VERSION = 1


def _encode(obj, out: list):
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise ValueError(f"cannot serialize non-finite value {obj}")
        text = format(float(obj), ".17g")
        # keep floats recognizable as floats
        if not any(c in text for c in ".e"):
            text += ".0"
        out.append(text)
    elif obj is None or isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for k, (key, value) in enumerate(obj.items()):
            if k:
                out.append(", ")
            out.append(json.dumps(str(key)) + ": ")
            _encode(value, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for k, value in enumerate(obj):
            if k:
                out.append(", ")
            _encode(value, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every float at 17 significant digits."""
    out: list = []
    _encode(obj, out)
    return "".join(out)


def _write(path, obj):
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def _read(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def genotype_to_dict(g: Genotype) -> dict:
    matrices = {}
    for name in BLOCK_NAMES:
        value = getattr(g, name)
        matrices[name] = [m for m in value] if isinstance(value, tuple) else value
    doc = {
        "format_version": FORMAT_VERSION,
        "dims": g.dims.to_dict(),
        "constraint_mode": g.constraint_mode,
        "temperature": g.temperature,
        "seed": g.seed,
        "matrices": matrices,
    }
    if g.coexpression_mask is not None:
        doc["coexpression_mask"] = g.coexpression_mask
    return doc


def genotype_from_dict(doc: dict) -> Genotype:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {version!r}")
    dims = ModelDims.from_dict(doc["dims"])
    mask = doc.get("coexpression_mask")
    template = Genotype(dims, np.zeros(param_count(dims)), doc["constraint_mode"],
                        None if mask is None else np.array(mask), doc["temperature"], doc["seed"])
    blocks = {}
    for name in BLOCK_NAMES:
        raw = doc["matrices"][name]
        current = getattr(template, name)
        if isinstance(current, tuple):
            if len(raw) != len(current):
                raise ValueError(f"{name}: expected {len(current)} layers, got {len(raw)}")
            blocks[name] = [_matrix(r, c.shape, f"{name}[{k}]") for k, (r, c) in enumerate(zip(raw, current))]
        else:
            blocks[name] = _matrix(raw, current.shape, name)
    return template.with_blocks(**blocks)


def _matrix(raw, shape, label):
    m = np.array(raw, dtype=np.float64)
    if m.shape != shape:
        raise ValueError(f"{label}: expected shape {shape}, got {m.shape}")
    return m


def save_genotype(path, g: Genotype, extra: dict = None):
    doc = genotype_to_dict(g)
    if extra:
        doc.update(extra)
    _write(path, doc)


def load_genotype(path) -> Genotype:
    return genotype_from_dict(_read(path))


def save_agent(path, agent: SampledAgent, genotype: Genotype):
    doc = genotype_to_dict(genotype)
    doc["agent"] = {
        "alpha": agent.alpha,
        "seed": agent.seed,
        "provenance": agent.provenance,
        "B_tilde": [B.astype(np.int64) for B in agent.counts],
        "W": list(agent.weights),
    }
    _write(path, doc)


def load_agent(path):
    """Return ``(agent, genotype)`` from a sampled-agent file."""
    doc = _read(path)
    genotype = genotype_from_dict(doc)
    a = doc.get("agent")
    if a is None:
        raise ValueError(f"{path} holds a genotype, not a sampled agent")
    counts = [np.array(B, dtype=np.int64) for B in a["B_tilde"]]
    weights = [np.array(W, dtype=np.float64) for W in a["W"]]
    agent = SampledAgent(counts, weights, float(a["alpha"]), int(a["seed"]),
                         a.get("provenance"), genotype.dims.tonic_input)
    return agent, genotype


def save_json(path, obj):
    _write(path, obj)


def load_json(path):
    return _read(path)
