"""Train-only feature and label encoders.

Ordinal columns get dense codes ``0..m-1`` by sorted training value, with
``-1`` for anything unseen or missing. Numeric columns are z-scored with
training statistics.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.preprocessing import OrdinalEncoder
from sklearn.utils.validation import check_is_fitted

from ..autodiff.tensor import LabelError

STD_FLOOR = 1e-8


def fit_transform_numeric(train: np.ndarray, *others: np.ndarray) -> list[np.ndarray]:
    """Z-score ``train`` columns and apply the same map to ``others``.

    Missing values are imputed with the training mean (so they encode to 0).
    """
    train = np.asarray(train, dtype=np.float64)
    mean = np.nanmean(train, axis=0) if train.size else np.zeros(train.shape[1:])
    mean = np.where(np.isnan(mean), 0.0, mean)
    filled = np.where(np.isnan(train), mean, train)
    std = np.maximum(filled.std(axis=0), STD_FLOOR)
    out = [(filled - mean) / std]
    for o in others:
        o = np.asarray(o, dtype=np.float64)
        out.append((np.where(np.isnan(o), mean, o) - mean) / std)
    return out


class TabularEncoder(TransformerMixin, BaseEstimator):
    """Column-wise encoder for a mixed ordinal/numeric frame.

    Parameters
    ----------
    features : sequence of (name, kind) pairs, kind in {"ordinal", "numeric"}
    """

    def __init__(self, features: Sequence[tuple[str, str]] = ()):
        self.features = features

    def _split(self):
        ordinal = [n for n, k in self.features if k == "ordinal"]
        numeric = [n for n, k in self.features if k == "numeric"]
        return ordinal, numeric

    def fit(self, X: pd.DataFrame, y=None):
        ordinal, numeric = self._split()
        missing = [n for n, _ in self.features if n not in X.columns]
        if missing:
            raise KeyError(f"columns {missing} absent from input")
        self.ordinal_ = None
        if ordinal:
            self.ordinal_ = OrdinalEncoder(
                handle_unknown="use_encoded_value", unknown_value=-1, encoded_missing_value=-1,
                dtype=np.float64,
            ).fit(X[ordinal])
        num = X[numeric].to_numpy(dtype=np.float64) if numeric else np.zeros((len(X), 0))
        mean = np.nanmean(num, axis=0) if len(num) else np.zeros(num.shape[1])
        self.mean_ = np.where(np.isnan(mean), 0.0, mean)
        filled = np.where(np.isnan(num), self.mean_, num)
        self.scale_ = np.maximum(filled.std(axis=0), STD_FLOOR)
        self.n_features_in_ = len(self.features)
        return self

    def transform(self, X: pd.DataFrame) -> np.ndarray:
        check_is_fitted(self, "mean_")
        ordinal, numeric = self._split()
        cols: dict[str, np.ndarray] = {}
        if ordinal:
            codes = self.ordinal_.transform(X[ordinal])
            for i, n in enumerate(ordinal):
                cols[n] = codes[:, i]
        if numeric:
            num = X[numeric].to_numpy(dtype=np.float64)
            z = (np.where(np.isnan(num), self.mean_, num) - self.mean_) / self.scale_
            for i, n in enumerate(numeric):
                cols[n] = z[:, i]
        return np.column_stack([cols[n] for n, _ in self.features]).astype(np.float64)

    def get_feature_names_out(self, input_features=None):
        return np.array([n for n, _ in self.features], dtype=object)


@dataclass(frozen=True)
class LabelMap:
    classes: tuple

    def __len__(self) -> int:
        return len(self.classes)

    def transform(self, y: Iterable) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.classes)}
        y = list(y)
        out = np.empty(len(y), dtype=np.int64)
        for i, v in enumerate(y):
            v = _scalar(v)
            if v not in lookup:
                raise LabelError(f"label {v!r} at index {i} not among fitted classes {list(self.classes)}")
            out[i] = lookup[v]
        return out

    def inverse_transform(self, codes: Iterable[int]) -> list:
        return [self.classes[int(c)] for c in codes]

    def as_dict(self) -> dict:
        return {c: i for i, c in enumerate(self.classes)}


def _scalar(v):
    return v.item() if isinstance(v, np.generic) else v


def fit_label_encoder(classes: Iterable | Sequence[Iterable], mode: str = "local") -> LabelMap:
    """``local``: sorted distinct classes of one client. ``global``: sorted
    union over a sequence of per-client class lists."""
    if mode == "local":
        values = {_scalar(c) for c in classes}
    elif mode == "global":
        values = {_scalar(c) for cs in classes for c in cs}
    else:
        raise ValueError(f"unknown label encoder mode {mode!r}")
    if not values:
        raise LabelError("cannot fit a label encoder on an empty class list")
    return LabelMap(tuple(sorted(values)))
