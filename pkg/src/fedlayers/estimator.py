"""scikit-learn style wrappers around the GL model and federation loop."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data.encoders import fit_label_encoder
from .data.types import ClientDataset
from .federation import FederationPlan, run_baseline, run_gl
from .model import DEFAULT_SELECTOR, FeatureSchema, ModelConfig


def _dataset(X, y, client_id: str, feature_names=None) -> ClientDataset:
    X, y = check_X_y(X, y, dtype=np.float64)
    label_map = fit_label_encoder(np.unique(y).tolist(), "local")
    names = feature_names or [f"x{j}" for j in range(X.shape[1])]
    schema = FeatureSchema.from_pairs([(n, "numeric") for n in names], len(label_map))
    empty = np.zeros((0, X.shape[1]))
    return ClientDataset(client_id, schema, X, label_map.transform(y), empty, np.zeros(0, np.int64),
                         empty, np.zeros(0, np.int64), label_map)


class _GLParams(BaseEstimator):
    def __init__(self, embedding_dim=16, blocks=6, heads=8, hidden=384, gated_hidden=None,
                 dropout=0.0, epochs=10, batches=15, lr=1e-3, weight_decay=1e-4, random_state=0):
        self.embedding_dim = embedding_dim
        self.blocks = blocks
        self.heads = heads
        self.hidden = hidden
        self.gated_hidden = gated_hidden
        self.dropout = dropout
        self.epochs = epochs
        self.batches = batches
        self.lr = lr
        self.weight_decay = weight_decay
        self.random_state = random_state

    def _model_config(self, selector=DEFAULT_SELECTOR) -> ModelConfig:
        return ModelConfig(embedding_dim=self.embedding_dim, blocks=self.blocks, heads=self.heads,
                           hidden=self.hidden, gated_hidden=self.gated_hidden, dropout=self.dropout,
                           selector=selector)

    def _plan(self, **kw) -> FederationPlan:
        return FederationPlan(rounds=self.epochs, batches=self.batches, lr=self.lr,
                              weight_decay=self.weight_decay, seed=self.random_state or 0, **kw)


def _proba(model, X) -> np.ndarray:
    scores = model.predict_scores(check_array(X, dtype=np.float64))
    return np.column_stack([1.0 - scores, scores]) if scores.ndim == 1 else scores


class GLClassifier(ClassifierMixin, _GLParams):
    """One client trained alone (the Local regime)."""

    def fit(self, X, y):
        data = _dataset(X, y, "local")
        self.classes_ = np.asarray(data.label_map.classes)
        self.n_features_in_ = data.schema.n_features
        _, states = run_baseline("local", [data], self._model_config(), self._plan(selector=frozenset()))
        self.model_ = states[0].model
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return _proba(self.model_, X)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]


class FederatedGLClassifier(_GLParams):
    """Global Layers across several clients with their own feature and
    label spaces. ``fit`` takes one ``(X, y)`` pair per client."""

    def __init__(self, selector=("gff1", "ff2", "gff2"), eta=1.0, embedding_dim=16, blocks=6, heads=8,
                 hidden=384, gated_hidden=None, dropout=0.0, epochs=10, batches=15, lr=1e-3,
                 weight_decay=1e-4, random_state=0):
        super().__init__(embedding_dim, blocks, heads, hidden, gated_hidden, dropout, epochs, batches,
                         lr, weight_decay, random_state)
        self.selector = selector
        self.eta = eta

    def fit(self, Xs: Sequence, ys: Sequence, client_ids: Sequence[str] | None = None):
        if len(Xs) != len(ys):
            raise ValueError(f"{len(Xs)} feature matrices but {len(ys)} label vectors")
        ids = list(client_ids) if client_ids is not None else [f"client{k}" for k in range(len(Xs))]
        data = [_dataset(X, y, cid) for X, y, cid in zip(Xs, ys, ids)]
        sel = frozenset(self.selector)
        self.round_log_, states = run_gl(data, self._model_config(sel),
                                         self._plan(selector=sel, eta=self.eta))
        self.clients_ = {s.client_id: s for s in states}
        self.classes_ = {s.client_id: np.asarray(s.data.label_map.classes) for s in states}
        return self

    def predict_proba(self, X, client: str):
        check_is_fitted(self, "clients_")
        return _proba(self.clients_[client].model, X)

    def predict(self, X, client: str):
        proba = self.predict_proba(X, client)
        return self.classes_[client][proba.argmax(axis=1)]
