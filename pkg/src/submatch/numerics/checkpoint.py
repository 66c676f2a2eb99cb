"""Checkpoint files: parameters, Adam moments and a free-form config header.

The file is a single JSON document::

    {"format": "submatch-checkpoint", "version": 1, "config": {...},
     "meta": {...}, "step": 12,
     "params": [{"name": ..., "shape": [...], "values": [...],
                 "adam_m": [...], "adam_v": [...]}, ...]}

Values are written with ``repr`` precision, so a save/load round trip is
bit-exact for float64.
"""

from __future__ import annotations

import json
from typing import Any, Optional

import numpy as np

from .optim import ParamStore

FORMAT = "submatch-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, store: ParamStore, config: Optional[dict] = None,
                    meta: Optional[dict] = None) -> None:
    doc: dict[str, Any] = {
        "format": FORMAT,
        "version": VERSION,
        "config": config or {},
        "meta": meta or {},
        "step": store.step,
        "params": [
            {
                "name": name,
                "shape": list(t.data.shape),
                "values": t.data.reshape(-1).tolist(),
                "adam_m": store.m[name].reshape(-1).tolist(),
                "adam_v": store.v[name].reshape(-1).tolist(),
            }
            for name, t in store.items()
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[ParamStore, dict, dict]:
    """Return ``(store, config, meta)``."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: not a checkpoint ({exc})") from None
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unknown format {doc.get('format')!r}")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {doc.get('version')!r}")
    store = ParamStore()
    for rec in doc["params"]:
        shape = tuple(rec["shape"])
        store.add(rec["name"], np.asarray(rec["values"], dtype=np.float64).reshape(shape))
        store.m[rec["name"]] = np.asarray(rec["adam_m"], dtype=np.float64).reshape(shape)
        store.v[rec["name"]] = np.asarray(rec["adam_v"], dtype=np.float64).reshape(shape)
    store.step = int(doc["step"])
    return store, doc["config"], doc["meta"]
