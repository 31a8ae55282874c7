"""Datasets and Non-IID partitioning across clients.

Two heterogeneity regimes are supported: a pathological split where each
client holds a small fixed number of classes, and a practical split where
each class's mass is spread over clients by a Dirichlet draw. Both work
on sample indices, so disjointness across clients is disjointness of
index sets.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

_DIRICHLET_RETRIES = 100


@dataclass
class LabeledDataset:
    """Feature matrix (n, D) with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self) -> None:
        if len(self.features) != len(self.labels):
            raise ConfigError("features and labels disagree on sample count")
        if len(self.labels) == 0:
            raise ConfigError("dataset must contain at least one sample")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ConfigError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features[indices], self.labels[indices], self.n_classes)


@dataclass
class ClientSplit:
    """One client's train/test partition (disjoint by sample identity)."""

    client_id: int
    train: LabeledDataset
    test: LabeledDataset


@dataclass
class PartitionSpec:
    """How a dataset is divided across clients.

    mode "pathological" gives each client `classes_per_client` classes
    with imbalanced within-class shares; mode "dirichlet" spreads each
    class over clients with Dir(beta) proportions (smaller beta, more
    skew).
    """

    mode: str
    n_clients: int
    classes_per_client: int = 2
    beta: float = 0.1
    min_samples_per_client: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("pathological", "dirichlet"):
            raise ConfigError(f"unknown partition mode {self.mode!r}")
        if self.n_clients < 1:
            raise ConfigError("n_clients must be >= 1")
        if self.mode == "dirichlet" and self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.mode == "pathological" and self.classes_per_client < 1:
            raise ConfigError("classes_per_client must be >= 1")


def generate_synthetic(
    n_classes: int, dim: int, per_class: int, separation: float, seed: int
) -> LabeledDataset:
    """Gaussian blobs: each class centered on a random unit direction
    scaled by `separation`, with unit isotropic noise."""
    if n_classes < 2 or per_class < 1 or separation <= 0:
        raise ConfigError(
            f"invalid synthetic params (n_classes={n_classes}, per_class={per_class}, "
            f"separation={separation})"
        )
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(n_classes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    centers = separation * directions
    features = np.empty((n_classes * per_class, dim))
    labels = np.empty(n_classes * per_class, dtype=np.int64)
    for c in range(n_classes):
        block = slice(c * per_class, (c + 1) * per_class)
        features[block] = centers[c] + rng.normal(size=(per_class, dim))
        labels[block] = c
    return LabeledDataset(features, labels, n_classes)


def _open_maybe_gzip(path: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, n: int, path: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataFormatError(f"{path}: truncated file (wanted {n} bytes, got {len(buf)})")
    return buf


def load_idx(images_path: str, labels_path: str) -> LabeledDataset:
    """Load an IDX image/label pair (big-endian, e.g. MNIST files).

    Pixels are scaled to [0, 1] and each image flattened row-major.
    Transparently decompresses ``.gz`` files.
    """
    with _open_maybe_gzip(images_path) as fh:
        magic, n_images, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad magic 0x{magic:08x} (expected 0x{IDX_IMAGES_MAGIC:08x})"
            )
        raw = _read_exact(fh, n_images * rows * cols, images_path)
    features = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    features = features.reshape(n_images, rows * cols)

    with _open_maybe_gzip(labels_path) as fh:
        magic, n_labels = struct.unpack(">II", _read_exact(fh, 8, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad magic 0x{magic:08x} (expected 0x{IDX_LABELS_MAGIC:08x})"
            )
        labels = np.frombuffer(_read_exact(fh, n_labels, labels_path), dtype=np.uint8)
    if n_labels != n_images:
        raise DataFormatError(
            f"{labels_path}: {n_labels} labels for {n_images} images in {images_path}"
        )
    labels = labels.astype(np.int64)
    return LabeledDataset(features, labels, int(labels.max()) + 1)


def pathological_indices(labels: np.ndarray, n_classes: int, spec: PartitionSpec) -> list[np.ndarray]:
    """Index sets for the pathological regime.

    Classes are assigned round-robin over a seeded shuffle, so every class
    is used once n_clients * classes_per_client >= n_classes, and classes
    shared by several clients are split by Dir(1.0) proportions.
    """
    cpc = spec.classes_per_client
    if cpc > n_classes:
        raise ConfigError(f"cannot give each client {cpc} of {n_classes} classes")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n_classes)
    owners: dict[int, list[int]] = {c: [] for c in range(n_classes)}
    for client in range(spec.n_clients):
        for j in range(cpc):
            owners[int(order[(client * cpc + j) % n_classes])].append(client)

    parts: list[list[np.ndarray]] = [[] for _ in range(spec.n_clients)]
    for c in range(n_classes):
        members = owners[c]
        if not members:
            continue
        idx = rng.permutation(np.flatnonzero(labels == c))
        if len(idx) < len(members):
            raise ConfigError(
                f"class {c} has {len(idx)} samples for {len(members)} owning clients"
            )
        # imbalanced shares, but every owner sees at least one sample so
        # each client really holds classes_per_client distinct classes
        shares = rng.dirichlet(np.ones(len(members)))
        extra = len(idx) - len(members)
        alloc = np.floor(shares * extra).astype(int)
        frac = shares * extra - alloc
        short = extra - alloc.sum()
        alloc[np.argsort(-frac, kind="stable")[:short]] += 1
        cuts = np.cumsum(alloc + 1)[:-1]
        for client, chunk in zip(members, np.split(idx, cuts)):
            parts[client].append(chunk)
    return [np.sort(np.concatenate(p)) if p else np.array([], dtype=int) for p in parts]


def dirichlet_indices(labels: np.ndarray, n_classes: int, spec: PartitionSpec) -> list[np.ndarray]:
    """Index sets for the practical regime: per class, a Dir(beta) draw
    over clients allocates that class's samples proportionally.

    The whole partition is resampled (fresh sub-seed) until every client
    has at least ``min_samples_per_client`` samples.
    """
    for attempt in range(_DIRICHLET_RETRIES):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, attempt]))
        parts: list[list[np.ndarray]] = [[] for _ in range(spec.n_clients)]
        for c in range(n_classes):
            idx = rng.permutation(np.flatnonzero(labels == c))
            shares = rng.dirichlet(np.full(spec.n_clients, spec.beta))
            cuts = (np.cumsum(shares)[:-1] * len(idx)).astype(int)
            for client, chunk in enumerate(np.split(idx, cuts)):
                parts[client].append(chunk)
        sizes = [sum(len(chunk) for chunk in p) for p in parts]
        if min(sizes) >= spec.min_samples_per_client:
            return [np.sort(np.concatenate(p)) for p in parts]
    raise ConfigError(
        f"could not give every client >= {spec.min_samples_per_client} samples in "
        f"{_DIRICHLET_RETRIES} attempts; lower min_samples_per_client or raise beta"
    )


def partition(ds: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    """Split a dataset into per-client datasets using the configured mode."""
    if spec.mode == "pathological":
        parts = pathological_indices(ds.labels, ds.n_classes, spec)
    else:
        parts = dirichlet_indices(ds.labels, ds.n_classes, spec)
    empty = [i for i, p in enumerate(parts) if len(p) == 0]
    if empty:
        raise ConfigError(f"clients {empty} received no samples; adjust the partition spec")
    return [ds.subset(p) for p in parts]


def partition_pathological(ds: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    if spec.mode != "pathological":
        raise ConfigError(f"spec mode is {spec.mode!r}, expected 'pathological'")
    return partition(ds, spec)


def partition_dirichlet(ds: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    if spec.mode != "dirichlet":
        raise ConfigError(f"spec mode is {spec.mode!r}, expected 'dirichlet'")
    return partition(ds, spec)


def split_train_test(
    client_data: LabeledDataset, client_id: int = 0, test_fraction: float = 0.25, seed: int = 0
) -> ClientSplit:
    """Seeded uniform shuffle, then hold out ~test_fraction for testing.

    The test side gets round(test_fraction * n) samples, clamped so both
    sides stay non-empty.
    """
    n = len(client_data)
    if n < 4:
        raise ConfigError(f"client {client_id} has {n} samples; need at least 4 to split")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_test = min(max(1, round(test_fraction * n)), n - 1)
    return ClientSplit(
        client_id,
        train=client_data.subset(order[n_test:]),
        test=client_data.subset(order[:n_test]),
    )
