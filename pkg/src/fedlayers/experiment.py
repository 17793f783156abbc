"""Reproduction harness: config resolution, per-seed runs and result tables."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

from threadpoolctl import threadpool_limits

from .data import align_for_fedavg, covertype_to_11, load_heart, read_covertype, read_heart_sources
from .data.cache import cache_path, load_clients, save_clients
from .data.covertype import covertype_centralized, covertype_clients, find_covertype_file
from .data.heart import CLIENTS as HEART_CLIENTS, find_source
from .data.types import ClientDataset
from .federation import FederationPlan, RoundLog, run_baseline, run_gl
from .metrics import SeedSummary, evaluate, summarize_seeds
from .model import DEFAULT_SELECTOR, ModelConfig

log = logging.getLogger(__name__)

EXPERIMENTS = ("covertype", "heart")
METHODS = ("gl", "fedavg", "local", "centralized")

EXPERIMENT_DEFAULTS = {
    "covertype": {"epochs": 105, "batches": 10, "seeds": (8, 28), "d_global": 8,
                  "metrics": ("auroc", "accuracy", "auprc")},
    "heart": {"epochs": 10, "batches": 15, "seeds": (0, 101), "d_global": 11,
              "metrics": ("auroc", "balanced_accuracy", "auprc")},
}

RESULT_COLUMNS = ("experiment", "client", "method", "metric", "mean", "std", "ci95", "n_seeds")


class UsageError(ValueError):
    """Bad configuration; the CLI maps this to exit status 2."""


@dataclass
class ExperimentConfig:
    experiment: str
    methods: tuple[str, ...] = ("gl",)
    seeds: tuple[int, int] = (0, 1)
    epochs: int = 10
    batches: int = 15
    eta: float = 1.0
    lr: float = 1e-3
    weight_decay: float = 1e-4
    model: ModelConfig = field(default_factory=ModelConfig)
    data_dir: str = ""
    out_dir: str = ""
    cache_dir: str | None = None
    validate_each_epoch: bool = True
    write_logs: bool = True

    @classmethod
    def defaults(cls, experiment: str, **overrides) -> "ExperimentConfig":
        if experiment not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
        d = EXPERIMENT_DEFAULTS[experiment]
        cfg = cls(experiment=experiment, seeds=d["seeds"], epochs=d["epochs"], batches=d["batches"],
                  model=ModelConfig(d_global=d["d_global"]))
        return dataclasses.replace(cfg, **overrides)

    @property
    def seed_list(self) -> list[int]:
        return list(range(*self.seeds))

    @property
    def metrics(self) -> tuple[str, ...]:
        return EXPERIMENT_DEFAULTS[self.experiment]["metrics"]

    def validate(self) -> None:
        for m in self.methods:
            if m not in METHODS:
                raise UsageError(f"unknown method {m!r}; choose from {METHODS}")
        a, b = self.seeds
        if b <= a:
            raise UsageError(f"empty seed range {a}:{b}")
        if self.epochs < 1 or self.batches < 1:
            raise UsageError("epochs and batches must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise UsageError(f"eta must be in [0, 1], got {self.eta}")

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["methods"] = list(self.methods)
        d["seeds"] = f"{self.seeds[0]}:{self.seeds[1]}"
        d["model"]["selector"] = sorted(self.model.selector)
        return d


def model_config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    if "selector" in d:
        d["selector"] = frozenset(d["selector"])
    return ModelConfig(**d)


# -- data -----------------------------------------------------------------
def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class ExperimentData:
    """Raw sources loaded and integrity-checked once, encoded per seed."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.integrity: dict[str, dict] = {}
        if config.experiment == "covertype":
            path = find_covertype_file(config.data_dir)
            raw = read_covertype(path)
            self.integrity["covertype"] = {"path": path, "rows": len(raw), "sha256": _digest(path)}
            self.table11 = covertype_to_11(raw)
        else:
            self.sources = read_heart_sources(config.data_dir)
            for c in HEART_CLIENTS:
                path = find_source(config.data_dir, c)
                self.integrity[c] = {"path": path, "rows": len(self.sources[c]), "sha256": _digest(path)}

    def clients(self, seed: int) -> list[ClientDataset]:
        cache = self.config.cache_dir
        if cache:
            path = cache_path(cache, self.config.experiment, "local", seed)
            if os.path.exists(path):
                return load_clients(path)
        if self.config.experiment == "covertype":
            out = covertype_clients(self.table11, seed, labels="local")
        else:
            out = load_heart(self.sources, seed)
        if cache:
            save_clients(path, out)
        return out

    def centralized(self, seed: int, clients: Sequence[ClientDataset]) -> list[ClientDataset]:
        if self.config.experiment == "covertype":
            return [covertype_centralized(self.table11, seed)]
        return list(clients)


# -- running --------------------------------------------------------------
def _plan(config: ExperimentConfig, seed: int) -> FederationPlan:
    return FederationPlan(
        rounds=config.epochs, batches=config.batches, eta=config.eta,
        selector=config.model.selector, seed=seed, lr=config.lr, weight_decay=config.weight_decay,
        val_metrics=config.metrics if config.validate_each_epoch else (),
    )


def run_method(method: str, data: ExperimentData, seed: int, clients: list[ClientDataset],
               config: ExperimentConfig) -> tuple[RoundLog, dict[str, dict[str, float]]]:
    plan = _plan(config, seed)
    if method == "gl":
        rlog, states = run_gl(clients, config.model, plan)
    elif method == "local":
        rlog, states = run_baseline("local", clients, config.model, plan)
    elif method == "fedavg":
        rlog, states = run_baseline("fedavg_full", align_for_fedavg(clients), config.model, plan)
    elif method == "centralized":
        rlog, states = run_baseline("centralized", data.centralized(seed, clients), config.model, plan)
    else:
        raise UsageError(f"unknown method {method!r}")
    scores = {}
    for s in states:
        X, y = s.data.X_test, s.data.y_test
        scores[s.client_id] = evaluate(s.model.predict_scores(X), y, config.metrics)
    return rlog, scores


@dataclass
class ResultRow:
    experiment: str
    client: str
    method: str
    summary: SeedSummary

    def csv_cells(self) -> list[str]:
        s = self.summary
        return [self.experiment, self.client, self.method, s.metric,
                repr(100 * s.mean), repr(100 * s.std), repr(100 * s.ci95), str(s.n)]


def run_experiment(config: ExperimentConfig) -> tuple[list[ResultRow], dict[str, Any]]:
    """Train every configured method on every seed and summarize each
    (client, method, metric) over seeds. Values are percentages."""
    config.validate()
    t0 = time.perf_counter()
    data = ExperimentData(config)  # integrity failures abort here, before training
    values: dict[tuple[str, str, str], list[float]] = {}
    logs: dict[tuple[str, int], RoundLog] = {}
    with threadpool_limits(limits=1):
        for seed in config.seed_list:
            clients = data.clients(seed)
            for method in config.methods:
                log.info("seed %d method %s", seed, method)
                rlog, scores = run_method(method, data, seed, clients, config)
                logs[(method, seed)] = rlog
                for cid, ms in scores.items():
                    for metric, v in ms.items():
                        values.setdefault((cid, method, metric), []).append(v)
    rows = []
    client_order = sorted({k[0] for k in values}, key=lambda c: (c == "centralized", c))
    for cid in client_order:
        for method in config.methods:
            for metric in config.metrics:
                vals = values.get((cid, method, metric))
                if vals is None:
                    continue
                if len(vals) >= 2:
                    summary = summarize_seeds(vals, metric)
                else:
                    summary = SeedSummary(metric, tuple(vals), vals[0], float("nan"), float("nan"))
                rows.append(ResultRow(config.experiment, cid, method, summary))
    meta = {"integrity": data.integrity, "logs": logs, "runtime_s": time.perf_counter() - t0}
    return rows, meta


# -- output ---------------------------------------------------------------
def results_csv(rows: Sequence[ResultRow]) -> str:
    lines = [",".join(RESULT_COLUMNS)] + [",".join(r.csv_cells()) for r in rows]
    return "\n".join(lines) + "\n"


def results_markdown(rows: Sequence[ResultRow]) -> str:
    methods = list(dict.fromkeys(r.method for r in rows))
    metrics = list(dict.fromkeys(r.summary.metric for r in rows))
    clients = list(dict.fromkeys(r.client for r in rows))
    cell = {(r.client, r.method, r.summary.metric): r.summary for r in rows}
    out = []
    for metric in metrics:
        out.append(f"### {metric} (%)\n")
        out.append("| client | " + " | ".join(methods) + " |")
        out.append("|---|" + "---|" * len(methods))
        for c in clients:
            cells = [cell[(c, m, metric)].format(scale=100) if (c, m, metric) in cell else "-"
                     for m in methods]
            out.append(f"| {c} | " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


def _write_atomic(directory: str, files: dict[str, str]) -> None:
    os.makedirs(directory, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".staging-", dir=directory)
    try:
        for rel, text in files.items():
            path = os.path.join(staging, rel)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        # results.csv goes last so its presence implies a complete run
        for rel in sorted(files, key=lambda r: r == "results.csv"):
            dest = os.path.join(directory, rel)
            os.makedirs(os.path.dirname(dest), exist_ok=True)
            os.replace(os.path.join(staging, rel), dest)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def emit_tables(rows: Sequence[ResultRow], directory: str, extra: dict[str, str] | None = None) -> None:
    """Write results.csv and results.md (plus ``extra`` files) atomically."""
    if not rows:
        raise ValueError("no results to emit")
    files = dict(extra or {})
    files["results.md"] = results_markdown(rows)
    files["results.csv"] = results_csv(rows)
    _write_atomic(directory, files)


def run_and_emit(config: ExperimentConfig) -> list[ResultRow]:
    rows, meta = run_experiment(config)
    extra = {
        "config.json": json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n",
        "integrity.json": json.dumps(meta["integrity"], indent=2, sort_keys=True) + "\n",
    }
    if config.write_logs:
        for (method, seed), rlog in meta["logs"].items():
            extra[f"logs/{method}-seed{seed}-train.csv"] = rlog.train_csv()
            extra[f"logs/{method}-seed{seed}-val.csv"] = rlog.val_csv()
    emit_tables(rows, config.out_dir, extra)
    log.info("finished in %.1fs", meta["runtime_s"])
    return rows


__all__ = [
    "DEFAULT_SELECTOR", "EXPERIMENTS", "ExperimentConfig", "METHODS", "ResultRow", "UsageError",
    "emit_tables", "model_config_from_dict", "results_csv", "results_markdown", "run_and_emit",
    "run_experiment",
]
