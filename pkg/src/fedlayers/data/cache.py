"""Versioned on-disk cache of encoded client datasets, keyed by
(experiment, variant, seed)."""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from ..model import FeatureSchema
from .encoders import LabelMap
from .types import ClientDataset

CACHE_VERSION = 1
_ARRAYS = ("X_train", "y_train", "X_val", "y_val", "X_test", "y_test")


def cache_path(root: str, experiment: str, variant: str, seed: int) -> str:
    return os.path.join(root, f"{experiment}-{variant}-seed{seed}.v{CACHE_VERSION}.npz")


def save_clients(path: str, clients: list[ClientDataset]) -> None:
    arrays = {}
    header = {"version": CACHE_VERSION, "clients": []}
    for i, c in enumerate(clients):
        header["clients"].append({
            "client_id": c.client_id,
            "features": [[f.name, f.kind] for f in c.schema.features],
            "n_classes": c.schema.n_classes,
            "classes": [_jsonable(v) for v in c.label_map.classes],
        })
        for name in _ARRAYS:
            arrays[f"{i}/{name}"] = getattr(c, name)
    arrays["header"] = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".npz")
    os.close(fd)
    np.savez(tmp, **arrays)
    os.replace(tmp, path)


def load_clients(path: str) -> list[ClientDataset]:
    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode("utf-8"))
        if header.get("version") != CACHE_VERSION:
            raise ValueError(f"{path}: cache version {header.get('version')} != {CACHE_VERSION}")
        out = []
        for i, meta in enumerate(header["clients"]):
            schema = FeatureSchema.from_pairs(meta["features"], meta["n_classes"])
            out.append(ClientDataset(
                client_id=meta["client_id"], schema=schema,
                label_map=LabelMap(tuple(meta["classes"])),
                **{name: z[f"{i}/{name}"] for name in _ARRAYS},
            ))
    return out


def _jsonable(v):
    return v.item() if isinstance(v, np.generic) else v
