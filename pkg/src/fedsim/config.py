"""Experiment configuration files.

The format is INI-style sections of key = value pairs:

    [dataset]
    kind = synthetic            ; or idx
    n_classes = 10
    dim = 32
    per_class = 200
    separation = 2.5
    seed = 42
    ; kind = idx instead takes:  images = <path>   labels = <path>

    [partition]
    mode = dirichlet            ; or pathological
    n_clients = 20
    beta = 0.1                  ; dirichlet only
    classes_per_client = 2      ; pathological only
    min_samples_per_client = 8
    seed = 7

    [rounds]
    total_rounds = 100
    join_ratio = 1.0            ; or a range: 0.1,1.0
    local_epochs = 1
    batch_size = 10
    local_lr = 0.05
    weight_lr = 0.05            ; optional, defaults to local_lr
    eval_every = 1
    early_stop_patience =       ; optional, empty = off

    [experiment]
    methods = fedavg, fedrep, fedah
    seeds = 1, 2, 3, 4, 5
    output_dir = runs/demo
    plot = true                 ; optional, emit curves.svg
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path

from .data import LabeledDataset, PartitionSpec, generate_synthetic, load_idx
from .errors import ConfigError
from .federation import RoundConfig

KNOWN_METHODS = ("fedavg", "fedper", "fedrep", "fedah")


@dataclass
class DatasetConfig:
    kind: str  # "synthetic" | "idx"
    n_classes: int = 10
    dim: int = 32
    per_class: int = 200
    separation: float = 2.5
    seed: int = 42
    images: str = ""
    labels: str = ""

    def load(self) -> LabeledDataset:
        if self.kind == "synthetic":
            return generate_synthetic(self.n_classes, self.dim, self.per_class, self.separation, self.seed)
        return load_idx(self.images, self.labels)


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig
    partition: PartitionSpec
    rounds: RoundConfig
    methods: list[str]
    seeds: list[int]
    output_dir: Path
    plot: bool = True


def _section(parser: configparser.ConfigParser, name: str) -> configparser.SectionProxy:
    if not parser.has_section(name):
        raise ConfigError(f"missing [{name}] section")
    return parser[name]


def _get(sec, key, cast, default=None):
    raw = sec.get(key, None)
    if raw is None or raw.strip() == "":
        if default is None:
            raise ConfigError(f"missing key {key!r} in [{sec.name}]")
        return default
    try:
        return cast(raw.strip())
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r} in [{sec.name}]: {raw.strip()!r}") from exc


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _parse_join_ratio(raw: str) -> float | tuple[float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) == 1:
        return float(parts[0])
    if len(parts) == 2:
        return (float(parts[0]), float(parts[1]))
    raise ValueError(raw)


def _parse_int_list(raw: str) -> list[int]:
    return [int(p.strip()) for p in raw.split(",") if p.strip()]


def _parse_str_list(raw: str) -> list[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    dsec = _section(parser, "dataset")
    kind = _get(dsec, "kind", str)
    if kind == "synthetic":
        dataset = DatasetConfig(
            kind=kind,
            n_classes=_get(dsec, "n_classes", int, 10),
            dim=_get(dsec, "dim", int, 32),
            per_class=_get(dsec, "per_class", int, 200),
            separation=_get(dsec, "separation", float, 2.5),
            seed=_get(dsec, "seed", int, 42),
        )
    elif kind == "idx":
        dataset = DatasetConfig(
            kind=kind,
            images=_get(dsec, "images", str),
            labels=_get(dsec, "labels", str),
        )
        for p in (dataset.images, dataset.labels):
            if not os.path.exists(p):
                raise ConfigError(f"dataset file not found: {p}")
    else:
        raise ConfigError(f"unknown dataset kind {kind!r} (use synthetic or idx)")

    psec = _section(parser, "partition")
    partition = PartitionSpec(
        mode=_get(psec, "mode", str),
        n_clients=_get(psec, "n_clients", int),
        classes_per_client=_get(psec, "classes_per_client", int, 2),
        beta=_get(psec, "beta", float, 0.1),
        min_samples_per_client=_get(psec, "min_samples_per_client", int, 8),
        seed=_get(psec, "seed", int, 0),
    )

    rsec = _section(parser, "rounds")
    patience = rsec.get("early_stop_patience", "").strip()
    wlr = rsec.get("weight_lr", "").strip()
    rounds = RoundConfig(
        total_rounds=_get(rsec, "total_rounds", int),
        join_ratio=_get(rsec, "join_ratio", _parse_join_ratio, 1.0),
        local_epochs=_get(rsec, "local_epochs", int, 1),
        batch_size=_get(rsec, "batch_size", int, 10),
        local_lr=_get(rsec, "local_lr", float, 0.05),
        weight_lr=float(wlr) if wlr else None,
        eval_every=_get(rsec, "eval_every", int, 1),
        early_stop_patience=int(patience) if patience else None,
    )

    esec = _section(parser, "experiment")
    methods = _get(esec, "methods", _parse_str_list)
    seeds = _get(esec, "seeds", _parse_int_list)
    if not methods:
        raise ConfigError("need at least one method")
    if not seeds:
        raise ConfigError("need at least one seed")
    for m in methods:
        if m not in KNOWN_METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {KNOWN_METHODS}")
    if any(s < 0 for s in seeds):
        raise ConfigError("seeds must be non-negative")

    return ExperimentConfig(
        dataset=dataset,
        partition=partition,
        rounds=rounds,
        methods=methods,
        seeds=seeds,
        output_dir=Path(_get(esec, "output_dir", str)),
        plot=_get(esec, "plot", _parse_bool, True),
    )
