"""Per-client local update rules for each federated method.

All four methods share one interface: ``local_update(client, global,
cfg, round_idx)`` mutates the client's state and returns a report with
the model to upload. FedAvg trains the whole model from the received
global one; FedPer keeps a personal head and trains jointly; FedRep
alternates head-then-extractor training; FedAH additionally learns
per-entry weights that blend the personal head with the global head
before the alternating phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterator

import numpy as np

from . import seeding
from .errors import ShapeError
from .nn import Batch, Layer, Model, loss_and_grads, n_extractor_params, n_params, sgd_step

if TYPE_CHECKING:
    from .data import LabeledDataset
    from .federation import ClientState, RoundConfig

__all__ = [
    "AggregationWeights",
    "LocalUpdateReport",
    "Strategy",
    "FedAvg",
    "FedPer",
    "FedRep",
    "FedAH",
    "make_strategy",
    "build_aggregated_head",
    "learn_aggregation_weights",
    "personalized_model",
]

# Per-entry blending weights over the head's parameters; shape-congruent
# with the head layer, every entry kept in [0, 1] by clipping.
AggregationWeights = Layer


@dataclass
class LocalUpdateReport:
    """Outcome of one client's local update."""

    client_id: int
    model: Model                      # trained local model (upload source)
    transmitted_params: int           # per sharing contract, one direction
    phase_losses: dict[str, float] = field(default_factory=dict)

    @property
    def mean_loss(self) -> float:
        if not self.phase_losses:
            return float("nan")
        return float(np.mean(list(self.phase_losses.values())))


def _batches(ds: "LabeledDataset", epochs: int, batch_size: int, rng: np.random.Generator) -> Iterator[Batch]:
    """Seeded mini-batches: fresh shuffle per epoch, last partial batch kept."""
    n = len(ds)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            yield Batch(ds.features[idx], ds.labels[idx])


def _train(
    model: Model,
    ds: "LabeledDataset",
    cfg: "RoundConfig",
    rng: np.random.Generator,
    *,
    freeze_extractor: bool = False,
    freeze_head: bool = False,
) -> tuple[Model, float]:
    """Run cfg.local_epochs of SGD; returns the model and mean batch loss."""
    losses = []
    for batch in _batches(ds, cfg.local_epochs, cfg.batch_size, rng):
        loss, grads = loss_and_grads(
            model, batch, freeze_extractor=freeze_extractor, freeze_head=freeze_head
        )
        model = sgd_step(model, grads, cfg.local_lr)
        losses.append(loss)
    return model, float(np.mean(losses)) if losses else float("nan")


def build_aggregated_head(prev_head: Layer, global_head: Layer, weights: AggregationWeights) -> Layer:
    """Element-wise blend: prev + (global - prev) * w.

    With w == 1 this returns the global head bit-for-bit; with w == 0,
    the client's previous head. Any w in [0, 1] interpolates entry by
    entry, never leaving the interval spanned by the two heads.
    """
    for a, b in ((prev_head.weights, global_head.weights), (prev_head.bias, global_head.bias)):
        if a.shape != b.shape:
            raise ShapeError(f"head shapes differ: {a.shape} vs {b.shape}")
    if prev_head.weights.shape != weights.weights.shape:
        raise ShapeError(
            f"aggregation weights {weights.weights.shape} not congruent with head "
            f"{prev_head.weights.shape}"
        )

    def blend(p: np.ndarray, g: np.ndarray, w: np.ndarray) -> np.ndarray:
        # convex form so w = 0 / w = 1 reproduce the endpoints exactly;
        # the final clip repairs sub-ulp rounding that would otherwise
        # let entries escape the [min, max] envelope
        out = p * (1.0 - w) + g * w
        return np.clip(out, np.minimum(p, g), np.maximum(p, g))

    return Layer(
        blend(prev_head.weights, global_head.weights, weights.weights),
        blend(prev_head.bias, global_head.bias, weights.bias),
    )


def _learn_weights(
    client: "ClientState",
    global_model: Model,
    cfg: "RoundConfig",
    round_idx: int,
    hook: Callable[[str, dict], None] | None = None,
) -> tuple[AggregationWeights, float]:
    w = client.agg_weights.copy()
    prev, glob = client.prev_head, global_model.head
    delta_w = glob.weights - prev.weights
    delta_b = glob.bias - prev.bias
    rng = seeding.rng_for(cfg.master_seed, round_idx, client.id, seeding.PHASE_WEIGHTS)
    losses = []
    for batch in _batches(client.split.train, cfg.local_epochs, cfg.batch_size, rng):
        blended = build_aggregated_head(prev, glob, w)
        loss, grads = loss_and_grads(
            Model(global_model.extractor, blended), batch, freeze_extractor=True
        )
        losses.append(loss)
        w = Layer(
            np.clip(w.weights - cfg.weight_lr * grads.head.weights * delta_w, 0.0, 1.0),
            np.clip(w.bias - cfg.weight_lr * grads.head.bias * delta_b, 0.0, 1.0),
        )
        if hook is not None:
            hook("weight_step", {"weights": w})
    client.agg_weights = w
    return w, float(np.mean(losses)) if losses else float("nan")


def learn_aggregation_weights(
    client: "ClientState",
    global_model: Model,
    cfg: "RoundConfig",
    round_idx: int,
    *,
    hook: Callable[[str, dict], None] | None = None,
) -> AggregationWeights:
    """Gradient-descend the head-blending weights on the client's data.

    Starting from the client's persisted weights, each mini-batch
    rebuilds the blended head from the current weights, takes the head
    gradient of the loss with the extractor frozen, chains it through
    the blend (grad * (global - prev)), steps with cfg.weight_lr, and
    clips every entry back into [0, 1]. The updated weights are
    persisted on the client and returned.
    """
    w, _ = _learn_weights(client, global_model, cfg, round_idx, hook)
    return w


def personalized_model(client: "ClientState") -> Model:
    """The model a client is evaluated with: its current local model."""
    return client.local_model


def _bootstrap(client: "ClientState", global_model: Model, w_init: float) -> None:
    # First participation: adopt the received head as the previous-round
    # head and reset the blending weights.
    if not client.participated:
        client.prev_head = global_model.head.copy()
        client.agg_weights = Layer(
            np.full_like(global_model.head.weights, w_init),
            np.full_like(global_model.head.bias, w_init),
        )
        client.participated = True


class Strategy:
    """Base class; subclasses implement one method's local update."""

    name: str = ""
    shares_head: bool = True

    def transmitted_params(self, model: Model) -> int:
        return n_params(model) if self.shares_head else n_extractor_params(model)

    def local_update(
        self, client: "ClientState", global_model: Model, cfg: "RoundConfig", round_idx: int
    ) -> LocalUpdateReport:
        raise NotImplementedError


class FedAvg(Strategy):
    """Overwrite the local model with the global one, train jointly, upload all."""

    name = "fedavg"
    shares_head = True

    def local_update(self, client, global_model, cfg, round_idx):
        _bootstrap(client, global_model, w_init=1.0)
        rng = seeding.rng_for(cfg.master_seed, round_idx, client.id, seeding.PHASE_JOINT)
        model, loss = _train(global_model.copy(), client.split.train, cfg, rng)
        client.local_model = model
        client.prev_head = model.head.copy()
        return LocalUpdateReport(
            client.id, model.copy(), self.transmitted_params(model), {"joint": loss}
        )


class FedPer(Strategy):
    """Global extractor, personal head, joint training; only the extractor travels."""

    name = "fedper"
    shares_head = False

    def local_update(self, client, global_model, cfg, round_idx):
        _bootstrap(client, global_model, w_init=0.0)
        rng = seeding.rng_for(cfg.master_seed, round_idx, client.id, seeding.PHASE_JOINT)
        start = Model([l.copy() for l in global_model.extractor], client.prev_head.copy())
        model, loss = _train(start, client.split.train, cfg, rng)
        client.local_model = model
        client.prev_head = model.head.copy()
        return LocalUpdateReport(
            client.id, model.copy(), self.transmitted_params(model), {"joint": loss}
        )


class FedRep(Strategy):
    """Alternating update: tune the personal head first, then the extractor."""

    name = "fedrep"
    shares_head = False

    def local_update(self, client, global_model, cfg, round_idx):
        _bootstrap(client, global_model, w_init=0.0)
        model = Model([l.copy() for l in global_model.extractor], client.prev_head.copy())

        head_rng = seeding.rng_for(cfg.master_seed, round_idx, client.id, seeding.PHASE_HEAD)
        model, head_loss = _train(model, client.split.train, cfg, head_rng, freeze_extractor=True)

        ext_rng = seeding.rng_for(cfg.master_seed, round_idx, client.id, seeding.PHASE_EXTRACTOR)
        model, ext_loss = _train(model, client.split.train, cfg, ext_rng, freeze_head=True)

        client.local_model = model
        client.prev_head = model.head.copy()
        return LocalUpdateReport(
            client.id,
            model.copy(),
            self.transmitted_params(model),
            {"head": head_loss, "extractor": ext_loss},
        )


class FedAH(Strategy):
    """FedRep-style alternating update, but the head starts from an
    adaptive element-wise blend of the personal and global heads.

    ``w_init`` sets the blending weights at a client's first
    participation (1.0 adopts the global head initially; 0.0 reproduces
    FedRep when combined with weight_lr = 0). ``hook``, if given, is
    called with ("weight_step", {...}) after every weight update and
    ("head_build", {...}) after the blend, for invariant checking.
    """

    name = "fedah"
    shares_head = True

    def __init__(self, w_init: float = 1.0, hook: Callable[[str, dict], None] | None = None):
        self.w_init = w_init
        self.hook = hook

    def local_update(self, client, global_model, cfg, round_idx):
        _bootstrap(client, global_model, w_init=self.w_init)

        w, weight_loss = _learn_weights(client, global_model, cfg, round_idx, self.hook)
        blended = build_aggregated_head(client.prev_head, global_model.head, w)
        if self.hook is not None:
            self.hook(
                "head_build",
                {"prev": client.prev_head, "global": global_model.head, "built": blended},
            )

        model = Model([l.copy() for l in global_model.extractor], blended)
        head_rng = seeding.rng_for(cfg.master_seed, round_idx, client.id, seeding.PHASE_HEAD)
        model, head_loss = _train(model, client.split.train, cfg, head_rng, freeze_extractor=True)

        ext_rng = seeding.rng_for(cfg.master_seed, round_idx, client.id, seeding.PHASE_EXTRACTOR)
        model, ext_loss = _train(model, client.split.train, cfg, ext_rng, freeze_head=True)

        client.local_model = model
        client.prev_head = model.head.copy()
        return LocalUpdateReport(
            client.id,
            model.copy(),
            self.transmitted_params(model),
            {"weights": weight_loss, "head": head_loss, "extractor": ext_loss},
        )


_REGISTRY = {"fedavg": FedAvg, "fedper": FedPer, "fedrep": FedRep, "fedah": FedAH}


def make_strategy(name: str) -> Strategy:
    """Instantiate a strategy by id: fedavg | fedper | fedrep | fedah."""
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; choose from {sorted(_REGISTRY)}") from None
