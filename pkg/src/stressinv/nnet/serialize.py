"""JSON checkpoint envelope for networks and training state.

Parameters are stored as base-10 decimal floats; Python's float repr
round-trips fp64 exactly, so load(save(x)) is bit-identical.
"""

from __future__ import annotations

import json

import numpy as np


def arrays_to_json(arrays):
    return [{"shape": list(a.shape), "values": np.asarray(a, dtype=np.float64).ravel().tolist()}
            for a in arrays]


def arrays_from_json(records):
    out = []
    for rec in records:
        a = np.asarray(rec["values"], dtype=np.float64).reshape(rec["shape"])
        out.append(a)
    return out


def dump_json(obj, path):
    """Deterministic JSON emission: sorted keys, fixed separators, newline EOF."""
    text = json.dumps(obj, sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def save_checkpoint(path, arch, module, seed, extra=None):
    """Write a network checkpoint: architecture descriptor + full state."""
    envelope = {
        "format": "stressinv-checkpoint-v1",
        "arch": arch,
        "seed": seed,
        "state": arrays_to_json(module.state()),
    }
    if extra:
        envelope.update(extra)
    dump_json(envelope, path)


def load_checkpoint(path):
    envelope = load_json(path)
    if envelope.get("format") != "stressinv-checkpoint-v1":
        raise ValueError(f"unrecognized checkpoint format in {path}")
    envelope["state"] = arrays_from_json(envelope["state"])
    return envelope
