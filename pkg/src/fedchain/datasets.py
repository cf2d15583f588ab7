"""Dataset loading, SMOTE expansion, splitting and client partitioning.

All operations are pure and deterministic under a fixed seed. A dataset is
a feature matrix plus integer labels plus the ordered class-name tuple that
defines the label encoding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

BINARY_CLASSES = ("human", "bot")
MULTICLASS_CLASSES = ("Arbitrage", "Liquidation", "Sandwich", "Non-MEV")


class DataFormatError(ValueError):
    """Malformed dataset file; messages carry 1-based file line numbers."""


class LabeledSample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(eq=False)
class Dataset:
    features: np.ndarray  # (n_samples, feature_dim) float64
    labels: np.ndarray    # (n_samples,) int64 class indices
    classes: tuple[str, ...]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.classes = tuple(self.classes)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.labels.shape != (len(self.features),):
            raise ValueError("labels must be one per feature row")
        if not self.classes:
            raise ValueError("class list is empty")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class names must be unique")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if len(self.labels) and (self.labels.min() < 0
                                 or self.labels.max() >= len(self.classes)):
            raise ValueError("label index out of range")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> Iterator[LabeledSample]:
        for row, label in zip(self.features, self.labels):
            yield LabeledSample(row, int(label))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.classes))

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.classes)

    def remap_classes(self, new_order: Sequence[str]) -> "Dataset":
        """Re-encode labels so class indices follow ``new_order``."""
        if sorted(new_order) != sorted(self.classes):
            raise ValueError(f"{tuple(new_order)} is not a permutation of {self.classes}")
        mapping = np.array([list(new_order).index(name) for name in self.classes])
        return Dataset(self.features, mapping[self.labels], tuple(new_order))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.classes == other.classes
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))


def load_csv(path, classes: Optional[Sequence[str]] = None) -> Dataset:
    """Read a dataset CSV: header of feature names plus a final ``label`` column.

    Labels map to class indices in ``classes`` order when given, otherwise in
    order of first appearance in the file. Row order is preserved.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if len(header) < 2 or header[-1] != "label":
            raise DataFormatError(f"{path}: last header column must be 'label'")
        width = len(header)

        known = list(classes) if classes is not None else []
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise DataFormatError(
                    f"{path}: row {lineno}: expected {width} columns, got {len(row)}"
                )
            values = np.empty(width - 1)
            for col, cell in enumerate(row[:-1]):
                try:
                    values[col] = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {lineno}: non-numeric value {cell!r} "
                        f"in column {header[col]!r}"
                    ) from None
            if not np.all(np.isfinite(values)):
                raise DataFormatError(f"{path}: row {lineno}: non-finite feature value")
            name = row[-1]
            if name not in known:
                if classes is not None:
                    raise DataFormatError(
                        f"{path}: row {lineno}: unknown class {name!r}"
                    )
                known.append(name)
            rows.append(values)
            labels.append(known.index(name))

    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.vstack(rows), np.array(labels), tuple(known))


def save_csv(data: Dataset, path) -> None:
    """Write a dataset in the load_csv format (features f0..fN, then label)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(data.feature_dim)] + ["label"])
        for row, label in zip(data.features, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [data.classes[label]])


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_per_class: int = 5000
    rng_seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be at least 1")
        if self.target_per_class < 1:
            raise ValueError("target_per_class must be at least 1")


def _nearest_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of each point's k nearest Euclidean neighbors (self excluded)."""
    sq = np.einsum("ij,ij->i", points, points)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote_expand(data: Dataset, config: SmoteConfig) -> Dataset:
    """Grow every class to exactly ``target_per_class`` samples with SMOTE.

    Each synthetic sample is x + delta * (nn - x) for a seeded-random class
    member x, one of its k nearest same-class neighbors nn, and delta drawn
    uniformly from [0, 1). Original samples are kept unmodified, in their
    original order; synthetics are appended grouped by class.
    """
    rng = np.random.default_rng(config.rng_seed)
    counts = data.class_counts()
    for idx, count in enumerate(counts):
        if count <= config.k_neighbors:
            raise ValueError(
                f"class {data.classes[idx]!r} has {count} samples; SMOTE with "
                f"{config.k_neighbors} neighbors needs at least {config.k_neighbors + 1}"
            )
        if count > config.target_per_class:
            raise ValueError(
                f"class {data.classes[idx]!r} already exceeds the target "
                f"({count} > {config.target_per_class})"
            )

    new_features = [data.features]
    new_labels = [data.labels]
    for idx in range(len(data.classes)):
        need = config.target_per_class - counts[idx]
        if need == 0:
            continue
        members = data.features[data.labels == idx]
        neighbors = _nearest_neighbors(members, config.k_neighbors)
        base = rng.integers(0, len(members), size=need)
        picked = neighbors[base, rng.integers(0, config.k_neighbors, size=need)]
        delta = rng.random(need)[:, None]
        synthetic = members[base] + delta * (members[picked] - members[base])
        new_features.append(synthetic)
        new_labels.append(np.full(need, idx, dtype=np.int64))

    return Dataset(np.concatenate(new_features), np.concatenate(new_labels),
                   data.classes)


def stratified_split(data: Dataset, train_fraction: float,
                     seed: int) -> tuple[Dataset, Dataset]:
    """Per-class shuffled split; train share is round(class_size * fraction)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train_ids, test_ids = [], []
    for idx, name in enumerate(data.classes):
        members = np.flatnonzero(data.labels == idx)
        if len(members) < 2:
            raise ValueError(f"class {name!r} has fewer than 2 samples")
        order = rng.permutation(members)
        take = int(np.floor(len(members) * train_fraction + 0.5))
        train_ids.append(order[:take])
        test_ids.append(order[take:])
    train_ids = np.sort(np.concatenate(train_ids))
    test_ids = np.sort(np.concatenate(test_ids))
    return data.subset(train_ids), data.subset(test_ids)


def partition_clients(data: Dataset, num_clients: int, seed: int) -> list[Dataset]:
    """Class-stratified disjoint shards; per-class sizes differ by at most 1."""
    if num_clients < 1:
        raise ValueError("num_clients must be at least 1")
    rng = np.random.default_rng(seed)
    shard_ids: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
    for idx, name in enumerate(data.classes):
        members = np.flatnonzero(data.labels == idx)
        if len(members) < num_clients:
            raise ValueError(
                f"class {name!r} has {len(members)} samples, fewer than "
                f"{num_clients} clients"
            )
        order = rng.permutation(members)
        for shard, chunk in zip(shard_ids, np.array_split(order, num_clients)):
            shard.append(chunk)
    return [data.subset(np.sort(np.concatenate(chunks))) for chunks in shard_ids]


def synth_generate(num_per_class: int, feature_dim: int, num_classes: int,
                   separation: float, seed: int,
                   class_names: Optional[Sequence[str]] = None) -> Dataset:
    """Gaussian class clusters with seeded means.

    Cluster means are drawn at random and rescaled so the minimum pairwise
    distance equals ``separation``; per-class noise has unit variance, so
    separation is measured in noise standard deviations. separation = 0
    collapses all means to the origin.
    """
    if num_per_class < 1 or feature_dim < 1 or num_classes < 1:
        raise ValueError("counts must all be at least 1")
    if separation < 0:
        raise ValueError("separation must be non-negative")
    if class_names is None:
        class_names = tuple(f"class_{i}" for i in range(num_classes))
    if len(class_names) != num_classes:
        raise ValueError("class_names length must equal num_classes")

    rng = np.random.default_rng(seed)
    if num_classes == 1:
        means = np.zeros((1, feature_dim))
    else:
        raw = rng.normal(size=(num_classes, feature_dim))
        raw -= raw.mean(axis=0)
        gaps = np.linalg.norm(raw[:, None, :] - raw[None, :, :], axis=2)
        np.fill_diagonal(gaps, np.inf)
        min_gap = gaps.min()
        if min_gap == 0.0:
            raise RuntimeError("degenerate cluster means; try another seed")
        means = raw * (separation / min_gap)

    features = np.concatenate([
        means[c] + rng.normal(size=(num_per_class, feature_dim))
        for c in range(num_classes)
    ])
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), num_per_class)
    return Dataset(features, labels, tuple(class_names))


@dataclass(frozen=True)
class MinMaxScale:
    """Per-feature affine map to [0, 1], fitted on training data."""

    mins: tuple[float, ...]
    spans: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"mins": list(self.mins), "spans": list(self.spans)}

    @classmethod
    def from_dict(cls, payload: dict) -> "MinMaxScale":
        return cls(tuple(payload["mins"]), tuple(payload["spans"]))


def fit_minmax(data: Dataset) -> MinMaxScale:
    lo = data.features.min(axis=0)
    hi = data.features.max(axis=0)
    spans = np.where(hi > lo, hi - lo, 1.0)
    return MinMaxScale(tuple(float(v) for v in lo), tuple(float(v) for v in spans))


def apply_minmax(data: Dataset, scale: MinMaxScale) -> Dataset:
    if len(scale.mins) != data.feature_dim:
        raise ValueError("scale was fitted on a different feature dim")
    scaled = (data.features - np.array(scale.mins)) / np.array(scale.spans)
    return Dataset(scaled, data.labels, data.classes)


def canonical_order(classes: Sequence[str]) -> Optional[tuple[str, ...]]:
    """Canonical class ordering for the two built-in tasks, if applicable."""
    for preset in (BINARY_CLASSES, MULTICLASS_CLASSES):
        if sorted(classes) == sorted(preset):
            return preset
    return None


__all__ = [
    "BINARY_CLASSES", "MULTICLASS_CLASSES", "DataFormatError", "Dataset",
    "LabeledSample", "MinMaxScale", "SmoteConfig", "apply_minmax",
    "canonical_order", "fit_minmax", "load_csv", "partition_clients",
    "save_csv", "smote_expand", "stratified_split", "synth_generate",
]
