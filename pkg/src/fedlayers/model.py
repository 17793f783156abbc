"""Global Layers client model and its private/global parameter partition.

Each client owns a full model::

    batchnorm -> per-feature embedding -> transformer blocks -> flatten
      -> FF1 -> GFF1 -> FF2 -> GFF2 -> FF3 -> output linear

FF1 and everything before it depend on the client's feature count and stay
private; the output linear depends on the class count and stays private.
Any subset of {GFF1, FF2, GFF2, FF3} can be federated because their shapes
depend only on :class:`ModelConfig`.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Literal

import numpy as np

from .autodiff import nn
from .autodiff import tensor as T
from .autodiff.rng import RngStream
from .autodiff.tensor import Tensor

FEDERATED_CANDIDATES = ("gff1", "ff2", "gff2", "ff3")
DEFAULT_SELECTOR = frozenset({"gff1", "ff2", "gff2"})


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


class InvalidSelectorError(ValueError):
    pass


@dataclass(frozen=True)
class Feature:
    name: str
    kind: Literal["ordinal", "numeric"]


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]
    n_classes: int

    def __post_init__(self):
        names = [f.name for f in self.features]
        if not names:
            raise SchemaError("schema needs at least one feature")
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate feature names in {names}")
        if self.n_classes < 1:
            raise SchemaError(f"n_classes must be >= 1, got {self.n_classes}")
        for f in self.features:
            if f.kind not in ("ordinal", "numeric"):
                raise SchemaError(f"feature {f.name!r} has unknown kind {f.kind!r}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]], n_classes: int) -> "FeatureSchema":
        return cls(tuple(Feature(n, k) for n, k in pairs), n_classes)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_outputs(self) -> int:
        # binary tasks use one logit with a sigmoid
        return 1 if self.n_classes <= 2 else self.n_classes


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int = 16
    blocks: int = 6
    heads: int = 8
    hidden: int = 384
    gated_hidden: int | None = None
    dropout: float = 0.0
    selector: frozenset[str] = DEFAULT_SELECTOR
    # recorded for provenance only; no layer consumes it
    d_global: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "selector", frozenset(self.selector))
        if self.gated_hidden is None:
            object.__setattr__(self, "gated_hidden", self.hidden // 2)
        if self.embedding_dim < 1 or self.blocks < 0 or self.heads < 1 or self.hidden < 1:
            raise ConfigError(f"non-positive size in {self}")
        if self.embedding_dim % self.heads:
            raise ConfigError(f"embedding_dim {self.embedding_dim} not divisible by heads {self.heads}")
        if not 1 <= self.gated_hidden <= self.hidden:
            raise ConfigError(f"gated_hidden {self.gated_hidden} must be in [1, {self.hidden}]")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout {self.dropout} outside [0, 1)")
        _check_selector(self.selector)


def _check_selector(selector: Iterable[str]) -> None:
    bad = sorted(set(selector) - set(FEDERATED_CANDIDATES))
    if bad:
        raise InvalidSelectorError(
            f"layers {bad} cannot be federated; candidates are {list(FEDERATED_CANDIDATES)}"
        )


class EntityEmbedding(nn.Module):
    """Maps feature ``j`` through its own affine scalar -> vector map."""

    def __init__(self, n_features: int, dim: int, init: RngStream, name: str = "embedding"):
        self.weight = nn.parameter(init.child(name + ".weight").uniform(-1.0, 1.0, (n_features, dim)))
        self.bias = nn.parameter(init.child(name + ".bias").uniform(-1.0, 1.0, (n_features, dim)))

    def forward(self, x: Tensor) -> Tensor:
        n, d = x.shape
        return x.reshape(n, d, 1) * self.weight + self.bias


class FeedForward(nn.Module):
    """Linear -> batchnorm -> SELU -> dropout."""

    def __init__(self, in_features: int, out_features: int, init: RngStream, name: str,
                 dropout: float = 0.0, dropout_rng: RngStream | None = None):
        self.linear = nn.Linear(in_features, out_features, init, name + ".linear")
        self.norm = nn.BatchNorm1d(out_features)
        self.dropout = nn.Dropout(dropout, dropout_rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.dropout(T.selu(self.norm(self.linear(x))))


class GatedFeedForward(nn.Module):
    """``x + down(selu(up(dropout(x)))) * gate(x)``."""

    def __init__(self, dim: int, hidden: int, init: RngStream, name: str,
                 dropout: float = 0.0, dropout_rng: RngStream | None = None):
        self.up = nn.Linear(dim, hidden, init, name + ".up")
        self.down = nn.Linear(hidden, dim, init, name + ".down")
        self.gate = nn.Linear(dim, dim, init, name + ".gate")
        self.dropout = nn.Dropout(dropout, dropout_rng)

    def forward(self, x: Tensor) -> Tensor:
        branch = self.down(T.selu(self.up(self.dropout(x))))
        return x + branch * self.gate(x)


class GLModel(nn.Module):
    def __init__(self, schema: FeatureSchema, config: ModelConfig, seed: int,
                 dropout_rng: RngStream | None = None):
        self.schema = schema
        self.config = config
        self.seed = int(seed)
        init = RngStream(seed, "init")
        d, e, h = schema.n_features, config.embedding_dim, config.hidden
        drop = config.dropout
        if drop > 0 and dropout_rng is None:
            dropout_rng = RngStream(seed, "dropout")
        self.input_norm = nn.BatchNorm1d(d)
        self.embedding = EntityEmbedding(d, e, init)
        self.blocks = [
            nn.TransformerBlock(e, config.heads, init, f"blocks.{i}", drop, dropout_rng)
            for i in range(config.blocks)
        ]
        self.ff1 = FeedForward(d * e, h, init, "ff1", drop, dropout_rng)
        self.gff1 = GatedFeedForward(h, config.gated_hidden, init, "gff1", drop, dropout_rng)
        self.ff2 = FeedForward(h, h, init, "ff2", drop, dropout_rng)
        self.gff2 = GatedFeedForward(h, config.gated_hidden, init, "gff2", drop, dropout_rng)
        self.ff3 = FeedForward(h, h, init, "ff3", drop, dropout_rng)
        self.head = nn.Linear(h, schema.n_outputs, init, "head")

    def forward(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 2 or x.shape[1] != self.schema.n_features:
            raise SchemaError(
                f"expected batch with {self.schema.n_features} columns, got shape {x.shape}"
            )
        n = x.shape[0]
        tokens = self.embedding(self.input_norm(x))
        for block in self.blocks:
            tokens = block(tokens)
        z = tokens.reshape(n, self.schema.n_features * self.config.embedding_dim)
        z = self.ff3(self.gff2(self.ff2(self.gff1(self.ff1(z)))))
        return self.head(z)

    def predict_scores(self, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Eval-mode class scores: positive-class probability (binary,
        shape ``n``) or softmax rows (shape ``n x c``)."""
        was_training = self.training
        self.eval()
        out = []
        try:
            with T.no_grad():
                for start in range(0, len(x), chunk):
                    logits = self.forward(Tensor(x[start:start + chunk])).data
                    if self.schema.n_outputs == 1:
                        out.append(T._stable_sigmoid(logits[:, 0]))
                    else:
                        z = logits - logits.max(axis=1, keepdims=True)
                        p = np.exp(z)
                        out.append(p / p.sum(axis=1, keepdims=True))
        finally:
            self.train(was_training)
        return np.concatenate(out, axis=0)

    def loss(self, x: np.ndarray, y: np.ndarray) -> Tensor:
        logits = self.forward(Tensor(x))
        if self.schema.n_outputs == 1:
            return T.bce_with_logits(logits, y)
        return T.softmax_cross_entropy(logits, y)


def build_model(schema: FeatureSchema, config: ModelConfig, seed: int) -> GLModel:
    return GLModel(schema, config, seed)


def layer_group(name: str) -> str:
    return name.split(".", 1)[0]


@dataclass
class ParameterPartition:
    private: list[tuple[str, Tensor]] = field(default_factory=list)
    global_: list[tuple[str, Tensor]] = field(default_factory=list)

    @property
    def global_names(self) -> list[str]:
        return [n for n, _ in self.global_]

    def global_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(n, p.shape) for n, p in self.global_]

    def global_arrays(self) -> list[np.ndarray]:
        """Copies of the global parameters; the only view the server gets."""
        return [p.data.copy() for _, p in self.global_]


def partition_parameters(model: GLModel, selector: Iterable[str] | None = None, *,
                         federate_all: bool = False) -> ParameterPartition:
    """Split ``model``'s parameters into private and global sets.

    ``federate_all`` puts every parameter in the global set (full-model
    FedAvg); otherwise only the layers named in ``selector`` are global.
    """
    selector = frozenset(model.config.selector if selector is None else selector)
    _check_selector(selector)
    part = ParameterPartition()
    for name, p in model.named_parameters():
        if federate_all or layer_group(name) in selector:
            part.global_.append((name, p))
        else:
            part.private.append((name, p))
    return part


def count_linear_projections(names: Iterable[str]) -> int:
    return sum(1 for n in names if n.endswith(".weight") and n.split(".")[-2] in
               ("linear", "up", "down", "gate", "head"))


# -- checkpoints ----------------------------------------------------------
_MAGIC = b"FLCK"
_VERSION = 1


def save_checkpoint(model: GLModel, fh: BinaryIO | str, selector: Iterable[str] | None = None) -> None:
    """Write ``(name, shape, float64 data)`` triples, private then global."""
    part = partition_parameters(model, selector)
    entries = part.private + part.global_
    entries += [(n, Tensor(b)) for n, b in model.named_buffers()]
    if isinstance(fh, str):
        with open(fh, "wb") as f:
            return save_checkpoint(model, f, selector)
    fh.write(_MAGIC + struct.pack("<II", _VERSION, len(entries)))
    for name, p in entries:
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)) + raw)
        fh.write(struct.pack("<B", p.data.ndim) + struct.pack(f"<{p.data.ndim}Q", *p.data.shape))
        fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def read_checkpoint(fh: BinaryIO | str) -> dict[str, np.ndarray]:
    if isinstance(fh, str):
        with open(fh, "rb") as f:
            return read_checkpoint(f)
    head = fh.read(12)
    if head[:4] != _MAGIC:
        raise ValueError("not a fedlayers checkpoint")
    version, count = struct.unpack("<II", head[4:])
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    out = {}
    for _ in range(count):
        (ln,) = struct.unpack("<H", fh.read(2))
        name = fh.read(ln).decode("utf-8")
        (nd,) = struct.unpack("<B", fh.read(1))
        shape = struct.unpack(f"<{nd}Q", fh.read(8 * nd))
        size = int(np.prod(shape)) if nd else 1
        out[name] = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape).copy()
    return out


def load_checkpoint(model: GLModel, fh: BinaryIO | str) -> None:
    state = read_checkpoint(fh)
    for name, p in model.named_parameters():
        if state[name].shape != p.shape:
            raise SchemaError(f"checkpoint shape {state[name].shape} != {p.shape} for {name}")
        p.data[...] = state[name]
    for name, b in model.named_buffers():
        b[...] = state[name]


def checkpoint_bytes(model: GLModel) -> bytes:
    buf = io.BytesIO()
    save_checkpoint(model, buf)
    return buf.getvalue()
