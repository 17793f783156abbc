"""BatchAlignedFedAvg and the Local / FedAvg / Centralized baselines.

All regimes share one scheduler: each epoch every client is cut into the
same number of batches; after every client has stepped on its b-th batch,
the server averages the global parameter lists and each client blends the
average back in with update rate ``eta``.
"""
from __future__ import annotations

import dataclasses
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .autodiff.optim import AdamW
from .autodiff.rng import RngStream
from .data.align import align_for_fedavg, pool_clients
from .data.types import AlignmentError, ClientDataset
from .metrics import evaluate
from .model import DEFAULT_SELECTOR, GLModel, ModelConfig, ParameterPartition, partition_parameters

log = logging.getLogger(__name__)


class FederationConfigError(ValueError):
    pass


class AggregationError(ValueError):
    pass


class ClientTrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class FederationPlan:
    rounds: int
    batches: int
    eta: float = 1.0
    aggregation: str = "uniform"  # or "sample"
    selector: frozenset[str] = DEFAULT_SELECTOR
    federate_all: bool = False
    seed: int = 0
    lr: float = 1e-3
    weight_decay: float = 1e-4
    val_metrics: tuple[str, ...] = ()
    workers: int = 0  # 0: FEDLAYERS_THREADS or 1

    def __post_init__(self):
        object.__setattr__(self, "selector", frozenset(self.selector))
        if self.rounds < 1 or self.batches < 1:
            raise FederationConfigError(f"rounds and batches must be >= 1 (got {self.rounds}, {self.batches})")
        if not 0.0 <= self.eta <= 1.0:
            raise FederationConfigError(f"eta must be in [0, 1], got {self.eta}")
        if self.aggregation not in ("uniform", "sample"):
            raise FederationConfigError(f"unknown aggregation rule {self.aggregation!r}")


@dataclass
class ClientState:
    client_id: str
    model: GLModel
    partition: ParameterPartition
    optimizer: AdamW
    data: ClientDataset
    shuffle: RngStream

    @property
    def loss_kind(self) -> str:
        return "bce" if self.model.schema.n_outputs == 1 else "cross_entropy"


@dataclass
class RoundLog:
    train: list[tuple[int, int, str, float]] = field(default_factory=list)
    val: list[tuple[int, str, str, str, float]] = field(default_factory=list)
    wall_clock: list[tuple[int, float]] = field(default_factory=list)

    def steps_per_client(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for _, _, cid, _ in self.train:
            out[cid] = out.get(cid, 0) + 1
        return out

    def train_csv(self) -> str:
        rows = ["epoch,batch,client_id,train_loss"]
        rows += [f"{e},{b},{c},{loss!r}" for e, b, c, loss in self.train]
        return "\n".join(rows) + "\n"

    def val_csv(self) -> str:
        rows = ["epoch,client_id,split,metric,value"]
        rows += [f"{e},{c},{s},{m},{v!r}" for e, c, s, m, v in self.val]
        return "\n".join(rows) + "\n"


def make_client(data: ClientDataset, config: ModelConfig, plan: FederationPlan,
                client_id: str | None = None) -> ClientState:
    """Build a client whose model is initialized from ``plan.seed``; the
    same seed and config give bit-identical global layers on every client."""
    cid = client_id or data.client_id
    model = GLModel(data.schema, config, plan.seed, dropout_rng=RngStream(plan.seed, "dropout", cid))
    part = partition_parameters(model, plan.selector, federate_all=plan.federate_all)
    opt = AdamW(model.parameters(), lr=plan.lr, weight_decay=plan.weight_decay)
    return ClientState(cid, model, part, opt, data, RngStream(plan.seed, "shuffle", cid))


def make_batches(client: ClientState, batches: int, epoch: int) -> list[np.ndarray]:
    """Shuffle the client's training rows and cut them into ``batches``
    contiguous index blocks; earlier blocks absorb the remainder."""
    n = client.data.n_train
    if n < batches:
        raise FederationConfigError(f"client {client.client_id!r} has {n} rows < {batches} batches")
    order = client.shuffle.child(f"epoch{epoch}").permutation(n)
    return np.array_split(order, batches)


def aggregate(global_sets: Sequence[Sequence[np.ndarray]], weights: Sequence[float],
              client_ids: Sequence[str] | None = None, names: Sequence[str] | None = None) -> list[np.ndarray]:
    """Elementwise ``sum_k weights[k] * global_sets[k]``, reduced in list order."""
    if not global_sets:
        raise AggregationError("nothing to aggregate")
    ids = client_ids or [str(i) for i in range(len(global_sets))]
    ref = global_sets[0]
    for k, gs in enumerate(global_sets):
        if len(gs) != len(ref):
            raise AggregationError(f"client {ids[k]!r} sent {len(gs)} tensors, expected {len(ref)}")
        for j, (a, b) in enumerate(zip(gs, ref)):
            if a.shape != b.shape:
                pname = names[j] if names else str(j)
                raise AggregationError(
                    f"client {ids[k]!r} parameter {pname!r} has shape {a.shape}, expected {b.shape}"
                )
    if len(global_sets) == 1 and weights[0] == 1.0:
        return [a.copy() for a in ref]
    out = []
    for j in range(len(ref)):
        acc = weights[0] * global_sets[0][j]
        for k in range(1, len(global_sets)):
            acc = acc + weights[k] * global_sets[k][j]
        out.append(acc)
    return out


def aggregation_weights(clients: Sequence[ClientState], rule: str) -> list[float]:
    if rule == "uniform":
        return [1.0 / len(clients)] * len(clients)
    counts = np.array([c.data.n_train for c in clients], dtype=np.float64)
    return list(counts / counts.sum())


def apply_update(client: ClientState, aggregated: Sequence[np.ndarray], eta: float) -> None:
    """``omega_k <- eta * aggregated + (1 - eta) * omega_k``."""
    if eta == 0.0:
        return
    for (name, p), a in zip(client.partition.global_, aggregated):
        if p.shape != a.shape:
            raise AggregationError(f"shape {a.shape} does not fit {name!r} {p.shape}")
        if eta == 1.0:
            p.data[...] = a
        else:
            p.data[...] = eta * a + (1.0 - eta) * p.data


def train_step(client: ClientState, idx: np.ndarray) -> float:
    model = client.model
    model.train()
    client.optimizer.zero_grad()
    loss = model.loss(client.data.X_train[idx], client.data.y_train[idx])
    loss.backward()
    client.optimizer.step()
    return loss.item()


def resolve_workers(requested: int | None = None) -> int:
    if requested and requested > 0:
        return requested
    env = os.environ.get("FEDLAYERS_THREADS")
    return max(1, int(env)) if env else 1


def _parallel(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def validate(client: ClientState, metrics: Iterable[str], split: str = "val") -> dict[str, float]:
    X, y = client.data.split(split)
    return _safe_evaluate(client.model.predict_scores(X), y, metrics)


def _safe_evaluate(scores, y, metrics) -> dict[str, float]:
    out = {}
    for m in metrics:
        try:
            out.update(evaluate(scores, y, [m]))
        except ValueError:
            out[m] = float("nan")
    return out


def run_batch_aligned_fedavg(clients: Sequence[ClientState], plan: FederationPlan,
                             log_: RoundLog | None = None) -> RoundLog:
    """Train all clients in lock-step, aggregating the global layers after
    every aligned batch. Mutates the clients in place."""
    rlog = log_ or RoundLog()
    clients = sorted(clients, key=lambda c: c.client_id)
    if len({tuple(c.partition.global_names) for c in clients}) > 1:
        raise FederationConfigError("clients disagree on the global parameter list")
    weights = aggregation_weights(clients, plan.aggregation)
    has_global = bool(clients[0].partition.global_)
    names = clients[0].partition.global_names
    workers = resolve_workers(plan.workers)
    ids = [c.client_id for c in clients]
    t0 = time.perf_counter()
    for epoch in range(plan.rounds):
        schedule = [make_batches(c, plan.batches, epoch) for c in clients]
        for b in range(plan.batches):
            def step(k: int) -> float:
                try:
                    return train_step(clients[k], schedule[k][b])
                except Exception as exc:
                    raise ClientTrainingError(
                        f"epoch {epoch}, batch {b}, client {clients[k].client_id!r}: {exc}"
                    ) from exc

            losses = _parallel(step, range(len(clients)), workers)
            for c, loss in zip(clients, losses):
                rlog.train.append((epoch, b, c.client_id, loss))
            if has_global and plan.eta > 0.0:
                sent = [c.partition.global_arrays() for c in clients]
                omega = aggregate(sent, weights, ids, names)
                for c in clients:
                    apply_update(c, omega, plan.eta)
        if plan.val_metrics:
            for c in clients:
                if len(c.data.y_val):
                    for m, v in validate(c, plan.val_metrics).items():
                        rlog.val.append((epoch, c.client_id, "val", m, v))
        rlog.wall_clock.append((epoch, time.perf_counter() - t0))
    return rlog


def run_baseline(kind: str, datasets: Sequence[ClientDataset], config: ModelConfig,
                 plan: FederationPlan) -> tuple[RoundLog, list[ClientState]]:
    """``local``: no aggregation. ``fedavg_full``: every parameter federated
    with sample-count weights (datasets must already be aligned).
    ``centralized``: local training on the pooled, aligned dataset."""
    if kind == "local":
        p = _replace(plan, selector=frozenset(), federate_all=False)
        clients = [make_client(d, config, p) for d in datasets]
    elif kind == "fedavg_full":
        if len({tuple(d.schema.names) for d in datasets}) > 1 or \
                len({d.label_map.classes for d in datasets}) > 1:
            raise AlignmentError("fedavg_full needs aligned feature and label spaces")
        p = _replace(plan, federate_all=True, aggregation="sample")
        clients = [make_client(d, config, p) for d in datasets]
    elif kind == "centralized":
        pooled = datasets[0] if len(datasets) == 1 else pool_clients(align_for_fedavg(datasets))
        p = _replace(plan, selector=frozenset(), federate_all=False)
        clients = [make_client(pooled, config, p)]
    else:
        raise ValueError(f"unknown baseline {kind!r}")
    return run_batch_aligned_fedavg(clients, p), clients


def run_gl(datasets: Sequence[ClientDataset], config: ModelConfig,
           plan: FederationPlan) -> tuple[RoundLog, list[ClientState]]:
    clients = [make_client(d, config, plan) for d in datasets]
    return run_batch_aligned_fedavg(clients, plan), clients


def _replace(plan: FederationPlan, **kw) -> FederationPlan:
    return dataclasses.replace(plan, **kw)
