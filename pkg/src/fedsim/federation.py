"""Server-side round loop: sampling, broadcast, aggregation, metrics.

One round samples a subset of clients, hands each the current global
model, runs the strategy's local update, aggregates the uploads weighted
by local data size, and (on evaluation rounds) scores every client's
personalized model on its own held-out test set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .data import ClientSplit, LabeledDataset, PartitionSpec, partition, split_train_test
from .errors import ConfigError, ShapeError
from .nn import Batch, Layer, Model, accuracy, init_model
from .strategies import LocalUpdateReport, Strategy, make_strategy, personalized_model

__all__ = [
    "RoundConfig",
    "ClientState",
    "ServerState",
    "RoundRecord",
    "MetricsLog",
    "sample_clients",
    "aggregate",
    "run_round",
    "run_experiment",
    "build_clients",
]

DEFAULT_HIDDEN_DIMS = (64, 32)


@dataclass
class RoundConfig:
    """Knobs for one federated run.

    ``join_ratio`` is either a fixed fraction in (0, 1] or a (lo, hi)
    range from which a fresh fraction is drawn each round (unstable
    participation). ``weight_lr`` defaults to ``local_lr``.
    """

    total_rounds: int
    join_ratio: float | tuple[float, float] = 1.0
    local_epochs: int = 1
    batch_size: int = 10
    local_lr: float = 0.05
    weight_lr: float | None = None
    eval_every: int = 1
    early_stop_patience: int | None = None
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.total_rounds < 1:
            raise ConfigError("total_rounds must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.local_epochs < 0:
            raise ConfigError("local_epochs must be >= 0")
        if self.local_lr <= 0:
            raise ConfigError("local_lr must be positive")
        if self.weight_lr is None:
            self.weight_lr = self.local_lr
        if self.weight_lr < 0:
            raise ConfigError("weight_lr must be >= 0")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        lo, hi = self.join_bounds
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"join_ratio must satisfy 0 < lo <= hi <= 1, got {self.join_ratio}")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")

    @property
    def join_bounds(self) -> tuple[float, float]:
        if isinstance(self.join_ratio, tuple):
            return self.join_ratio
        return (self.join_ratio, self.join_ratio)


@dataclass
class ClientState:
    """Everything a client persists between rounds."""

    id: int
    split: ClientSplit
    local_model: Model
    prev_head: Layer
    agg_weights: Layer
    participated: bool = False

    @property
    def n_train(self) -> int:
        return len(self.split.train)


@dataclass
class RoundRecord:
    """Metrics captured at one evaluation round."""

    round: int
    sampled: list[int]
    client_accuracy: dict[int, float]
    mean_accuracy: float
    mean_train_loss: float
    params_transmitted: int  # cumulative through this round


@dataclass
class MetricsLog:
    """Per-evaluation-round records plus best-round bookkeeping."""

    records: list[RoundRecord] = field(default_factory=list)

    @property
    def best_mean_accuracy(self) -> float:
        return max(r.mean_accuracy for r in self.records)

    @property
    def best_round(self) -> int:
        best = max(self.records, key=lambda r: r.mean_accuracy)
        return best.round

    def per_client_best(self) -> dict[int, float]:
        """Each client's best accuracy over all evaluation rounds."""
        best: dict[int, float] = {}
        for rec in self.records:
            for cid, acc in rec.client_accuracy.items():
                best[cid] = max(best.get(cid, 0.0), acc)
        return best


@dataclass
class ServerState:
    global_model: Model
    round: int
    clients: list[ClientState]
    metrics: MetricsLog
    params_transmitted: int = 0


def sample_clients(
    n_clients: int, join_ratio: float | tuple[float, float], rng: np.random.Generator
) -> list[int]:
    """Pick ceil(rho * N) distinct clients; rho is drawn uniformly first
    when a (lo, hi) range is given. Returned ids are sorted."""
    lo, hi = (join_ratio, join_ratio) if not isinstance(join_ratio, tuple) else join_ratio
    rho = lo if lo == hi else float(rng.uniform(lo, hi))
    k = max(1, math.ceil(rho * n_clients))
    return sorted(rng.choice(n_clients, size=k, replace=False).tolist())


def aggregate(models: list[Model], data_sizes: list[int]) -> Model:
    """Average models entry-wise with weights proportional to data size."""
    if not models:
        raise ValueError("cannot aggregate an empty model list")
    if len(models) != len(data_sizes):
        raise ShapeError("models and data_sizes differ in length")
    k = np.asarray(data_sizes, dtype=np.float64)
    k /= k.sum()

    def combine(pick) -> Layer:
        ref = pick(models[0])
        w = np.zeros_like(ref.weights)
        b = np.zeros_like(ref.bias)
        for ki, m in zip(k, models):
            layer = pick(m)
            if layer.weights.shape != ref.weights.shape:
                raise ShapeError("models are not shape-congruent")
            w += ki * layer.weights
            b += ki * layer.bias
        return Layer(w, b)

    n_layers = len(models[0].extractor)
    if any(len(m.extractor) != n_layers for m in models):
        raise ShapeError("models differ in extractor depth")
    extractor = [combine(lambda m, i=i: m.extractor[i]) for i in range(n_layers)]
    return Model(extractor, combine(lambda m: m.head))


def run_round(state: ServerState, strategy: Strategy, cfg: RoundConfig) -> ServerState:
    """Advance one round in place; logs metrics on evaluation rounds."""
    t = state.round + 1
    rng = seeding.rng_for(cfg.master_seed, t, seeding.PHASE_SAMPLE)
    sampled = sample_clients(len(state.clients), cfg.join_ratio, rng)

    reports: list[LocalUpdateReport] = []
    for cid in sampled:
        try:
            reports.append(strategy.local_update(state.clients[cid], state.global_model, cfg, t))
        except Exception as exc:
            raise RuntimeError(f"local update failed for client {cid} in round {t}") from exc

    uploads = [r.model for r in reports]
    sizes = [state.clients[r.client_id].n_train for r in reports]
    merged = aggregate(uploads, sizes)
    if strategy.shares_head:
        state.global_model = merged
    else:
        state.global_model = Model(merged.extractor, state.global_model.head)
    state.params_transmitted += 2 * sum(r.transmitted_params for r in reports)
    state.round = t

    if t % cfg.eval_every == 0:
        accs = {
            c.id: accuracy(personalized_model(c), Batch(c.split.test.features, c.split.test.labels))
            for c in state.clients
        }
        losses = [r.mean_loss for r in reports]
        state.metrics.records.append(
            RoundRecord(
                round=t,
                sampled=sampled,
                client_accuracy=accs,
                mean_accuracy=float(np.mean(list(accs.values()))),
                mean_train_loss=float(np.mean(losses)),
                params_transmitted=state.params_transmitted,
            )
        )
    return state


def build_clients(
    dataset: LabeledDataset,
    spec: PartitionSpec,
    global_model: Model,
    test_fraction: float = 0.25,
) -> list[ClientState]:
    """Partition the dataset and initialize every client from the global model."""
    clients = []
    for cid, client_ds in enumerate(partition(dataset, spec)):
        split = split_train_test(
            client_ds,
            client_id=cid,
            test_fraction=test_fraction,
            seed=seeding.seed_for(spec.seed, cid, seeding.PHASE_SPLIT),
        )
        clients.append(
            ClientState(
                id=cid,
                split=split,
                local_model=global_model.copy(),
                prev_head=global_model.head.copy(),
                agg_weights=Layer(
                    np.ones_like(global_model.head.weights),
                    np.ones_like(global_model.head.bias),
                ),
            )
        )
    return clients


def run_experiment(
    dataset: LabeledDataset,
    cfg: RoundConfig,
    spec: PartitionSpec,
    method: str | Strategy,
    hidden_dims: tuple[int, ...] = DEFAULT_HIDDEN_DIMS,
    test_fraction: float = 0.25,
) -> MetricsLog:
    """Run a full federated experiment and return its metrics.

    Deterministic for a fixed (dataset, cfg.master_seed, spec.seed):
    the global model is seeded by master_seed and every per-round,
    per-client, per-phase stream is derived via the scheme in
    ``seeding``. Stops early if the mean accuracy fails to improve for
    ``early_stop_patience`` consecutive evaluations.
    """
    strategy = make_strategy(method) if isinstance(method, str) else method
    if spec.n_clients > len(dataset):
        raise ConfigError("more clients than samples")
    global_model = init_model([dataset.dim, *hidden_dims], dataset.n_classes, cfg.master_seed)
    state = ServerState(
        global_model=global_model,
        round=0,
        clients=build_clients(dataset, spec, global_model, test_fraction),
        metrics=MetricsLog(),
    )

    best = -1.0
    stale = 0
    for _ in range(cfg.total_rounds):
        n_evals = len(state.metrics.records)
        run_round(state, strategy, cfg)
        if cfg.early_stop_patience is not None and len(state.metrics.records) > n_evals:
            mean_acc = state.metrics.records[-1].mean_accuracy
            if mean_acc > best:
                best = mean_acc
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break
    return state.metrics
