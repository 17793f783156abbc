"""Heart Disease experiment: Cleveland, South Africa and Faisalabad, one
client each, with seeded train/val/test splits."""
from __future__ import annotations

import os

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from ..model import FeatureSchema
from .encoders import TabularEncoder, fit_label_encoder
from .types import ClientDataset, RawTable, SourceIntegrityError

TARGET = "target"

# feature kinds follow the published dtypes: int -> ordinal, float -> numeric
CLEVELAND_FEATURES = (
    ("age", "ordinal"), ("sex", "ordinal"), ("cp", "ordinal"), ("trestbps", "ordinal"),
    ("chol", "ordinal"), ("fbs", "ordinal"), ("restecg", "numeric"), ("thalach", "numeric"),
    ("exang", "ordinal"), ("oldpeak", "numeric"), ("slope", "ordinal"), ("ca", "ordinal"),
    ("thal", "numeric"),
)
SAHEART_FEATURES = (
    ("sbp", "ordinal"), ("tobacco", "numeric"), ("ldl", "numeric"), ("adiposity", "numeric"),
    ("famhist", "ordinal"), ("typea", "ordinal"), ("obesity", "numeric"), ("alcohol", "numeric"),
    ("age", "ordinal"),
)
FAISALABAD_FEATURES = (
    ("age", "numeric"), ("anaemia", "ordinal"), ("creatinine_phosphokinase", "ordinal"),
    ("diabetes", "ordinal"), ("ejection_fraction", "ordinal"), ("high_blood_pressure", "ordinal"),
    ("platelets", "numeric"), ("serum_creatinine", "numeric"), ("serum_sodium", "ordinal"),
    ("sex", "ordinal"), ("smoking", "ordinal"), ("time", "ordinal"),
)

SOURCES = {
    "cleveland": {
        "files": ("processed.cleveland.data", "heart/processed.cleveland.data"),
        "rows": 303,
        "features": CLEVELAND_FEATURES,
    },
    "south_africa": {
        "files": ("SAheart.data", "heart/SAheart.data", "SAheart.csv", "heart/SAheart.csv"),
        "rows": 462,
        "features": SAHEART_FEATURES,
    },
    "faisalabad": {
        "files": ("heart_failure_clinical_records_dataset.csv",
                  "heart/heart_failure_clinical_records_dataset.csv"),
        "rows": 299,
        "features": FAISALABAD_FEATURES,
    },
}
CLIENTS = tuple(SOURCES)


def find_source(data_dir: str, client: str) -> str:
    for rel in SOURCES[client]["files"]:
        path = os.path.join(data_dir, rel)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"no {client} file among {SOURCES[client]['files']} under {data_dir}")


def read_cleveland(path: str) -> RawTable:
    names = [n for n, _ in CLEVELAND_FEATURES] + ["num"]
    frame = pd.read_csv(path, header=None, names=names, na_values="?", skipinitialspace=True)
    frame[TARGET] = (frame.pop("num") > 0).astype(np.int64)
    return RawTable(frame, source=path)


def read_saheart(path: str) -> RawTable:
    frame = pd.read_csv(path)
    frame = frame.drop(columns=[c for c in ("row.names", "Unnamed: 0") if c in frame.columns])
    frame = frame.rename(columns={"chd": TARGET})
    return RawTable(frame, source=path)


def read_faisalabad(path: str) -> RawTable:
    frame = pd.read_csv(path).rename(columns={"DEATH_EVENT": TARGET})
    return RawTable(frame, source=path)


READERS = {"cleveland": read_cleveland, "south_africa": read_saheart, "faisalabad": read_faisalabad}


def read_heart_sources(data_dir: str, check_rows: bool = True) -> dict[str, RawTable]:
    tables = {}
    for client in CLIENTS:
        path = find_source(data_dir, client)
        table = READERS[client](path)
        expected = SOURCES[client]["rows"]
        if check_rows and len(table) != expected:
            raise SourceIntegrityError(f"{path}: expected {expected} rows, found {len(table)}")
        absent = [n for n, _ in SOURCES[client]["features"] if n not in table.frame.columns]
        if absent:
            raise SourceIntegrityError(f"{path}: missing columns {absent}")
        tables[client] = table
    return tables


def heart_split_sizes(n: int) -> tuple[int, int, int]:
    """(train, val, test): test = ceil(0.33 n), val = ceil(0.10 (n - test))."""
    test = -(-33 * n // 100)
    val = -(-10 * (n - test) // 100)
    return n - test - val, val, test


def split_heart(table: RawTable, seed: int) -> dict[str, pd.DataFrame]:
    n = len(table)
    n_train, n_val, n_test = heart_split_sizes(n)
    idx = np.arange(n)
    rest, test = train_test_split(idx, test_size=n_test, random_state=seed, shuffle=True)
    train, val = train_test_split(rest, test_size=n_val, random_state=seed, shuffle=True)
    f = table.frame
    return {"train": f.iloc[train], "val": f.iloc[val], "test": f.iloc[test]}


def encode_heart_client(client: str, parts: dict[str, pd.DataFrame]) -> ClientDataset:
    features = SOURCES[client]["features"]
    enc = TabularEncoder(list(features)).fit(parts["train"])
    label_map = fit_label_encoder([0, 1], "local")
    schema = FeatureSchema.from_pairs(features, 2)
    ys = {k: label_map.transform(v[TARGET].astype(np.int64).tolist()) for k, v in parts.items()}
    return ClientDataset(
        client_id=client, schema=schema,
        X_train=enc.transform(parts["train"]), y_train=ys["train"],
        X_val=enc.transform(parts["val"]), y_val=ys["val"],
        X_test=enc.transform(parts["test"]), y_test=ys["test"],
        label_map=label_map, encoder=enc,
    )


def load_heart(sources: dict[str, RawTable], seed: int) -> list[ClientDataset]:
    """Three encoded clients; encoders fitted on each client's train split."""
    return [encode_heart_client(c, split_heart(sources[c], seed)) for c in CLIENTS]
