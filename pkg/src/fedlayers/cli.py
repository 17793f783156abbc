"""``fedlayers run ...`` command line entry point.

Exit status: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import yaml

from .experiment import (
    EXPERIMENTS,
    METHODS,
    ExperimentConfig,
    UsageError,
    model_config_from_dict,
    run_and_emit,
)

log = logging.getLogger("fedlayers")


def parse_seeds(text: str) -> tuple[int, int]:
    """``a:b`` is the half-open range [a, b); a bare ``a`` means [a, a+1)."""
    try:
        if ":" in text:
            a, b = (int(x) for x in text.split(":", 1))
        else:
            a = int(text)
            b = a + 1
    except ValueError:
        raise UsageError(f"bad seed range {text!r}; expected a:b") from None
    if b <= a:
        raise UsageError(f"empty seed range {text!r}")
    return a, b


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fedlayers", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run one experiment over a seed range")
    run.add_argument("--experiment", choices=EXPERIMENTS)
    run.add_argument("--method", help=f"one of {METHODS}, or a comma-separated list")
    run.add_argument("--seeds", help="half-open range a:b")
    run.add_argument("--epochs", type=int)
    run.add_argument("--batches", type=int)
    run.add_argument("--eta", type=float)
    run.add_argument("--config", help="JSON or YAML file with ExperimentConfig fields")
    run.add_argument("--data", help="directory holding the raw dataset files")
    run.add_argument("--out", help="output directory")
    run.add_argument("-v", "--verbose", action="store_true")
    return p


def _read_file(path: str) -> dict:
    if not os.path.exists(path):
        raise UsageError(f"config file {path} not found")
    with open(path, encoding="utf-8") as f:
        text = f.read()
    data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a mapping")
    return data


_FLAG_TO_FIELD = {
    "method": "methods", "seeds": "seeds", "epochs": "epochs", "batches": "batches",
    "eta": "eta", "data": "data_dir", "out": "out_dir",
}


def parse_config(argv: list[str] | None = None) -> ExperimentConfig:
    """Resolve defaults < config file < command-line flags."""
    args = build_parser().parse_args(argv)
    file_values = _read_file(args.config) if args.config else {}
    experiment = args.experiment or file_values.get("experiment")
    if experiment is None:
        raise UsageError("--experiment is required (flag or config file)")
    if args.experiment and file_values.get("experiment") not in (None, args.experiment):
        log.warning("flag --experiment=%s overrides config file value %s",
                    args.experiment, file_values["experiment"])
    cfg = ExperimentConfig.defaults(experiment)

    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    updates = {}
    for key, value in file_values.items():
        if key == "experiment":
            continue
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
        updates[key] = value
    if "model" in updates:
        base = dataclasses.asdict(cfg.model)
        if "hidden" in updates["model"]:
            base["gated_hidden"] = None  # re-derive from the new hidden width
        base.update(updates["model"])
        updates["model"] = base

    for flag, fld in _FLAG_TO_FIELD.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if fld in updates and updates[fld] != value:
            log.warning("flag --%s=%s overrides config file value %s", flag, value, updates[fld])
        updates[fld] = value

    try:
        if "methods" in updates:
            m = updates["methods"]
            updates["methods"] = tuple(m.split(",")) if isinstance(m, str) else tuple(m)
        if "seeds" in updates:
            s = updates["seeds"]
            updates["seeds"] = parse_seeds(s) if isinstance(s, str) else tuple(int(x) for x in s)
        if "model" in updates:
            updates["model"] = model_config_from_dict(updates["model"])
        cfg = dataclasses.replace(cfg, **updates)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    cfg.validate()
    if not cfg.data_dir or not os.path.isdir(cfg.data_dir):
        raise UsageError(f"data directory {cfg.data_dir!r} does not exist")
    if not cfg.out_dir:
        raise UsageError("--out is required")
    return cfg


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = parse_config(argv)
    except UsageError as exc:
        print(f"fedlayers: usage error: {exc}", file=sys.stderr)
        return 2
    try:
        run_and_emit(config)
    except Exception as exc:  # noqa: BLE001
        log.exception("run failed")
        print(f"fedlayers: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
