from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..model import FeatureSchema
from .encoders import LabelMap


class SourceIntegrityError(ValueError):
    pass


class MalformedRowError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


class DataConfigError(ValueError):
    pass


@dataclass
class RawTable:
    frame: pd.DataFrame
    source: str

    @property
    def columns(self) -> list[str]:
        return list(self.frame.columns)

    def __len__(self) -> int:
        return len(self.frame)


@dataclass
class SplitSpec:
    strategy: str  # "fixed-boundary" | "fractional"
    sizes: tuple[int, int, int]  # train, val, test
    seed: int = 0


@dataclass
class ClientDataset:
    client_id: str
    schema: FeatureSchema
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    label_map: LabelMap
    encoder: object = None
    meta: dict = field(default_factory=dict)

    @property
    def n_train(self) -> int:
        return len(self.y_train)

    @property
    def classes(self) -> list:
        return list(self.label_map.classes)

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return getattr(self, f"X_{name}"), getattr(self, f"y_{name}")

    def sizes(self) -> dict[str, int]:
        return {"train": len(self.y_train), "val": len(self.y_val), "test": len(self.y_test)}

