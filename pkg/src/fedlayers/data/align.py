"""Feature and label alignment for full-parameter federation."""
from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from ..model import Feature, FeatureSchema
from .encoders import fit_label_encoder
from .types import AlignmentError, ClientDataset


def _union_features(clients: Sequence[ClientDataset], kind_conflict: str) -> list[Feature]:
    kinds: dict[str, str] = {}
    for c in clients:
        for f in c.schema.features:
            prev = kinds.get(f.name)
            if prev is not None and prev != f.kind:
                if kind_conflict == "error":
                    raise AlignmentError(
                        f"feature {f.name!r} is {prev} elsewhere but {f.kind} in client {c.client_id!r}"
                    )
                kinds[f.name] = "numeric"
            else:
                kinds.setdefault(f.name, f.kind)
    return [Feature(n, kinds[n]) for n in sorted(kinds)]


def pad_align_features(clients: Sequence[ClientDataset], kind_conflict: str = "error") -> list[ClientDataset]:
    """Re-express every client over the sorted union of feature names,
    filling columns a client lacks with 0 in every split.

    ``kind_conflict='numeric'`` lets a name that is ordinal in one client and
    numeric in another through as numeric; each client's values were already
    encoded with its own encoder.
    """
    if len(clients) < 2:
        raise AlignmentError("alignment needs at least two clients")
    union = _union_features(clients, kind_conflict)
    names = [f.name for f in union]
    out = []
    for c in clients:
        pos = {n: i for i, n in enumerate(c.schema.names)}

        def pad(X: np.ndarray) -> np.ndarray:
            Z = np.zeros((X.shape[0], len(names)))
            for j, n in enumerate(names):
                if n in pos:
                    Z[:, j] = X[:, pos[n]]
            return Z

        schema = FeatureSchema(tuple(union), c.schema.n_classes)
        out.append(dataclasses.replace(
            c, schema=schema, X_train=pad(c.X_train), X_val=pad(c.X_val), X_test=pad(c.X_test),
            meta={**c.meta, "padded_from": c.schema.names},
        ))
    return out


def relabel_global(clients: Sequence[ClientDataset]) -> list[ClientDataset]:
    """Re-encode every client's labels with a label map fitted on the sorted
    union of the clients' (training) classes."""
    gmap = fit_label_encoder([c.label_map.classes for c in clients], "global")
    out = []
    for c in clients:
        def re(y):
            return gmap.transform(c.label_map.inverse_transform(y))

        schema = FeatureSchema(c.schema.features, len(gmap))
        out.append(dataclasses.replace(
            c, schema=schema, y_train=re(c.y_train), y_val=re(c.y_val), y_test=re(c.y_test),
            label_map=gmap,
        ))
    return out


def align_for_fedavg(clients: Sequence[ClientDataset], kind_conflict: str = "numeric") -> list[ClientDataset]:
    if len({tuple(c.schema.names) for c in clients}) > 1:
        clients = pad_align_features(clients, kind_conflict)
    if len({c.label_map.classes for c in clients}) > 1:
        clients = relabel_global(clients)
    return list(clients)


def pool_clients(clients: Sequence[ClientDataset], client_id: str = "centralized") -> ClientDataset:
    """Concatenate already aligned clients into one dataset."""
    if len({tuple(c.schema.names) for c in clients}) > 1 or len({c.label_map.classes for c in clients}) > 1:
        raise AlignmentError("pool_clients needs aligned feature and label spaces")
    cat = np.concatenate
    return dataclasses.replace(
        clients[0], client_id=client_id,
        X_train=cat([c.X_train for c in clients]), y_train=cat([c.y_train for c in clients]),
        X_val=cat([c.X_val for c in clients]), y_val=cat([c.y_val for c in clients]),
        X_test=cat([c.X_test for c in clients]), y_test=cat([c.y_test for c in clients]),
        encoder=None, meta={"pooled_from": [c.client_id for c in clients]},
    )
