from .align import align_for_fedavg, pad_align_features, pool_clients, relabel_global
from .covertype import (
    covertype_centralized,
    covertype_clients,
    covertype_to_11,
    partition_by_wilderness,
    read_covertype,
    split_covertype,
)
from .encoders import LabelMap, TabularEncoder, fit_label_encoder, fit_transform_numeric
from .heart import heart_split_sizes, load_heart, read_heart_sources, split_heart
from .types import (
    AlignmentError,
    ClientDataset,
    DataConfigError,
    MalformedRowError,
    RawTable,
    SourceIntegrityError,
    SplitSpec,
)

__all__ = [
    "AlignmentError", "ClientDataset", "DataConfigError", "LabelMap", "MalformedRowError",
    "RawTable", "SourceIntegrityError", "SplitSpec", "TabularEncoder", "align_for_fedavg",
    "covertype_centralized", "covertype_clients", "covertype_to_11", "fit_label_encoder",
    "fit_transform_numeric", "heart_split_sizes", "load_heart", "pad_align_features",
    "partition_by_wilderness", "pool_clients", "read_covertype", "read_heart_sources",
    "relabel_global", "split_covertype", "split_heart",
]
