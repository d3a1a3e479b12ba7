"""Versioned checkpoint files.

A checkpoint is a single JSON document::

    {
      "format": "pointattn-checkpoint",
      "version": 1,
      "architecture": { ... BackboneConfig fields ... },
      "params":  { name: {"shape": [...], "data": [flat values]} },
      "buffers": { name: {"shape": [...], "data": [flat values]} }
    }

The architecture header is validated on load and the network is rebuilt
from it, so a checkpoint fully determines the model.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import DEFAULT_DTYPE
from .network import BackboneConfig, build_network

FORMAT = "pointattn-checkpoint"
VERSION = 1


def _pack(pairs) -> dict:
    return {
        name: {"shape": list(arr.shape), "data": arr.astype(np.float64).ravel().tolist()}
        for name, arr in pairs
    }


def save_checkpoint(path, net) -> None:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "architecture": net.bb_config.to_dict(),
        "params": _pack((n, p.value) for n, p in net.named_params()),
        "buffers": _pack((n, b.value) for n, b in net.named_buffers()),
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path, dtype=DEFAULT_DTYPE):
    """Rebuild the network recorded in a checkpoint and restore its state."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path} is not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    bb = BackboneConfig.from_dict(doc["architecture"])
    net = build_network(bb, seed=0, dtype=dtype)
    _restore(dict(net.named_params()), doc["params"], lambda p: p.value, path)
    _restore(dict(net.named_buffers()), doc["buffers"], lambda b: b.value, path)
    return net


def _restore(live: dict, stored: dict, get_value, path) -> None:
    if set(live) != set(stored):
        missing = set(live) ^ set(stored)
        raise ValueError(f"checkpoint {path} does not match the architecture header; mismatched entries: {sorted(missing)[:5]}")
    for name, entry in stored.items():
        target = get_value(live[name])
        data = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if tuple(data.shape) != tuple(target.shape):
            raise ValueError(f"checkpoint entry {name!r} has shape {data.shape}, expected {tuple(target.shape)}")
        target[...] = data.astype(target.dtype)
