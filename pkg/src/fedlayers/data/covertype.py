"""Covertype: 54 raw columns -> 11 features, file-order splits, and one
client per wilderness area."""
from __future__ import annotations

import os

import numpy as np
import pandas as pd

from ..model import FeatureSchema
from .encoders import LabelMap, TabularEncoder, fit_label_encoder
from .types import ClientDataset, MalformedRowError, RawTable, SourceIntegrityError

COVERTYPE_ROWS = 581_012
SPLIT_SIZES = (11_340, 3_780, 565_892)

NUMERIC_RAW = {
    "Elevation": "elevation",
    "Aspect": "aspect",
    "Slope": "slope",
    "Horizontal_Distance_To_Hydrology": "hhdist",
    "Vertical_Distance_To_Hydrology": "vhdist",
    "Horizontal_Distance_To_Roadways": "hrdist",
    "Horizontal_Distance_To_Fire_Points": "hfpdist",
}
SHADE_RAW = ["Hillshade_9am", "Hillshade_Noon", "Hillshade_3pm"]
WILDERNESS_AREAS = ("rawah", "neota", "comanche", "poudre")

# USFS ELU codes of Soil_Type1..Soil_Type40, in column order (covtype.info)
SOIL_CODES = (
    2702, 2703, 2704, 2705, 2706, 2717, 3501, 3502, 4201, 4703,
    4704, 4744, 4758, 5101, 5151, 6101, 6102, 6731, 7101, 7102,
    7103, 7201, 7202, 7700, 7701, 7702, 7709, 7710, 7745, 7746,
    7755, 7756, 7757, 7790, 8703, 8707, 8708, 8771, 8772, 8776,
)

RAW_COLUMNS = (
    ["Elevation", "Aspect", "Slope", "Horizontal_Distance_To_Hydrology",
     "Vertical_Distance_To_Hydrology", "Horizontal_Distance_To_Roadways",
     "Hillshade_9am", "Hillshade_Noon", "Hillshade_3pm", "Horizontal_Distance_To_Fire_Points"]
    + [f"Wilderness_Area{i}" for i in range(1, 5)]
    + [f"Soil_Type{i}" for i in range(1, 41)]
    + ["Cover_Type"]
)

FEATURES = (
    ("elevation", "numeric"),
    ("aspect", "numeric"),
    ("slope", "numeric"),
    ("hhdist", "numeric"),
    ("vhdist", "numeric"),
    ("hrdist", "numeric"),
    ("hfpdist", "numeric"),
    ("soil_type", "ordinal"),
    ("climate_zone", "ordinal"),
    ("geological_zone", "ordinal"),
    ("wilderness_area", "ordinal"),
)
TARGET = "cover_type"
PARTITION_KEY = "wilderness_area"


def find_covertype_file(data_dir: str) -> str:
    for rel in ("covtype.data", "covtype.data.gz", "cover/covtype.data", "cover/covtype.data.gz",
                "covertype/covtype.data", "covertype/covtype.data.gz"):
        path = os.path.join(data_dir, rel)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"no covtype.data[.gz] under {data_dir}")


def read_covertype(path: str, expected_rows: int | None = COVERTYPE_ROWS) -> RawTable:
    frame = pd.read_csv(path, header=None, names=RAW_COLUMNS, dtype=np.int64)
    if expected_rows is not None and len(frame) != expected_rows:
        raise SourceIntegrityError(f"{path}: expected {expected_rows} rows, found {len(frame)}")
    return RawTable(frame, source=path)


def _single_hot(block: np.ndarray, what: str) -> np.ndarray:
    sums = block.sum(axis=1)
    bad = np.flatnonzero(sums != 1)
    if bad.size:
        raise MalformedRowError(f"row {bad[0]} has {sums[bad[0]]} hot {what} columns (expected 1)")
    return block.argmax(axis=1)


def covertype_to_11(raw: RawTable) -> RawTable:
    """Collapse soil and wilderness one-hots to ordinals, derive climate and
    geological zones from the soil code digits, drop the shade columns.

    Output columns: the 11 features, ``cover_type``, and the
    ``wilderness_area`` partition key (which doubles as a feature).
    """
    f = raw.frame
    missing = [c for c in RAW_COLUMNS if c not in f.columns]
    if missing:
        raise SourceIntegrityError(f"{raw.source}: missing raw columns {missing[:3]}...")
    soil_idx = _single_hot(f[[f"Soil_Type{i}" for i in range(1, 41)]].to_numpy(), "soil")
    wild_idx = _single_hot(f[[f"Wilderness_Area{i}" for i in range(1, 5)]].to_numpy(), "wilderness")
    soil = np.asarray(SOIL_CODES)[soil_idx]
    out = pd.DataFrame({new: f[old].to_numpy() for old, new in NUMERIC_RAW.items()})
    out["soil_type"] = soil
    out["climate_zone"] = soil // 1000
    out["geological_zone"] = (soil // 100) % 10
    out["wilderness_area"] = wild_idx + 1
    out[TARGET] = f["Cover_Type"].to_numpy()
    return RawTable(out, source=raw.source)


def split_covertype(table: RawTable, seed: int, sizes=SPLIT_SIZES) -> dict[str, pd.DataFrame]:
    """Fixed file-order boundaries; only the train split is shuffled by ``seed``."""
    n = len(table)
    if n != sum(sizes):
        raise SourceIntegrityError(f"expected {sum(sizes)} rows to split, found {n}")
    a, b = sizes[0], sizes[0] + sizes[1]
    f = table.frame
    train = f.iloc[:a]
    order = np.random.default_rng(seed).permutation(len(train))
    return {"train": train.iloc[order], "val": f.iloc[a:b], "test": f.iloc[b:]}


def area_name(code: int) -> str:
    return WILDERNESS_AREAS[int(code) - 1]


def partition_by_wilderness(splits: dict[str, pd.DataFrame]) -> dict[str, dict[str, pd.DataFrame]]:
    """Route rows of each split to a client named after its wilderness area."""
    clients: dict[str, dict[str, pd.DataFrame]] = {}
    for code in range(1, len(WILDERNESS_AREAS) + 1):
        name = area_name(code)
        clients[name] = {k: v[v[PARTITION_KEY] == code] for k, v in splits.items()}
    return dict(sorted(clients.items()))


def client_classes(parts: dict[str, pd.DataFrame]) -> list[int]:
    return sorted(set(pd.concat(parts.values())[TARGET].tolist()))


def encode_client(client_id: str, parts: dict[str, pd.DataFrame], label_map: LabelMap | None = None,
                  features=FEATURES) -> ClientDataset:
    """Fit feature and label encoders on ``parts['train']`` only and encode
    all three splits. ``label_map`` overrides the local label encoder."""
    train = parts["train"]
    enc = TabularEncoder(list(features)).fit(train)
    if label_map is None:
        label_map = fit_label_encoder(train[TARGET].tolist(), "local")
    schema = FeatureSchema.from_pairs(features, len(label_map))
    return ClientDataset(
        client_id=client_id,
        schema=schema,
        X_train=enc.transform(train), y_train=label_map.transform(train[TARGET].tolist()),
        X_val=enc.transform(parts["val"]), y_val=label_map.transform(parts["val"][TARGET].tolist()),
        X_test=enc.transform(parts["test"]), y_test=label_map.transform(parts["test"][TARGET].tolist()),
        label_map=label_map,
        encoder=enc,
    )


def covertype_clients(table11: RawTable, seed: int, labels: str = "local") -> list[ClientDataset]:
    """The four wilderness clients. ``labels='global'`` encodes every client
    with one label map fitted on the union of client training classes."""
    parts = partition_by_wilderness(split_covertype(table11, seed))
    global_map = None
    if labels == "global":
        global_map = fit_label_encoder([p["train"][TARGET].tolist() for p in parts.values()], "global")
    return [encode_client(name, p, global_map) for name, p in parts.items()]


def covertype_centralized(table11: RawTable, seed: int) -> ClientDataset:
    return encode_client("centralized", split_covertype(table11, seed))
