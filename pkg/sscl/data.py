"""Datasets and the stochastic two-view augmentation pipeline.

Synthetic datasets (blobs, rings) stand in for the image benchmarks at desk
scale; CIFAR-10 is read from its binary distribution format. Augmentations
are vector-space analogues of crops and color jitter: random scaling,
additive Gaussian noise and random coordinate masking.
"""

import csv
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from sscl.core import Matrix, as_matrix
from sscl.errors import BadFileSize, BadLabel, ConfigValidationError, MalformedDataset
from sscl.rng import KeyedRandom

logger = logging.getLogger(__name__)

CIFAR_RECORD_BYTES = 3073
CIFAR_PIXELS = 3072
CIFAR_CLASSES = 10


@dataclass
class LabeledDataset:
    """n feature rows with integer class labels in [0, class_count)."""

    features: Matrix
    labels: np.ndarray
    class_count: int
    name: str = "dataset"

    def __post_init__(self):
        """Normalize dtypes and check the label invariants."""
        self.features = as_matrix(self.features) if len(self.features) else np.zeros((0, self._dim_hint()))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError(f"{self.features.shape[0]} rows but {self.labels.shape} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"Labels must lie in [0, {self.class_count})")

    def _dim_hint(self) -> int:
        shape = np.shape(self.features)
        return shape[1] if len(shape) == 2 else 0

    @property
    def n(self) -> int:
        """Number of samples."""
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        """Feature width."""
        return self.features.shape[1]

    def subset(self, indices: Sequence[int], name: str = None) -> "LabeledDataset":
        """The samples at `indices`, in that order."""
        indices = np.asarray(indices, dtype=np.intp)
        return LabeledDataset(self.features[indices], self.labels[indices], self.class_count, name or self.name)


@dataclass
class AugmentConfig:
    """Strength of the vector-space augmentations."""

    noise_sigma: float = 0.1
    mask_prob: float = 0.2
    scale_jitter: float = 0.1
    seed: int = 0

    def validate(self):
        """Raise ConfigValidationError when a strength is out of range."""
        failures = []
        if self.noise_sigma < 0:
            failures.append(("augment.noise_sigma", f"must be >= 0, got {self.noise_sigma}"))
        if not 0.0 <= self.mask_prob < 1.0:
            failures.append(("augment.mask_prob", f"must lie in [0, 1), got {self.mask_prob}"))
        if self.scale_jitter < 0:
            failures.append(("augment.scale_jitter", f"must be >= 0, got {self.scale_jitter}"))
        if failures:
            raise ConfigValidationError(failures=failures)
        return self


def _require(condition: bool, path: str, message: str):
    if not condition:
        raise ConfigValidationError(message, path=path)


def gen_blobs(classes: int, dim: int, per_class: int, spread: float, seed: int) -> LabeledDataset:
    """Gaussian blobs around class centers drawn uniformly on the unit sphere."""
    _require(classes >= 2, "data.classes", f"needs at least 2 classes, got {classes}")
    _require(dim >= 2, "data.dim", f"needs at least 2 dimensions, got {dim}")
    _require(per_class >= 1, "data.per_class", f"needs at least 1 sample per class, got {per_class}")
    _require(spread >= 0, "data.spread", f"must be >= 0, got {spread}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    centers = rng.standard_normal((classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.repeat(np.arange(classes), per_class)
    noise = rng.standard_normal((classes * per_class, dim))
    return LabeledDataset(centers[labels] + spread * noise, labels, classes, "blobs")


def gen_rings(classes: int, per_class: int, noise: float, seed: int) -> LabeledDataset:
    """Concentric circles in the plane, class c at radius c+1."""
    _require(classes >= 2, "data.classes", f"needs at least 2 classes, got {classes}")
    _require(per_class >= 1, "data.per_class", f"needs at least 1 sample per class, got {per_class}")
    _require(noise >= 0, "data.noise", f"must be >= 0, got {noise}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    labels = np.repeat(np.arange(classes), per_class)
    angles = rng.uniform(0.0, 2.0 * math.pi, size=labels.size)
    radii = (labels + 1).astype(np.float64)
    points = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    return LabeledDataset(points + noise * rng.standard_normal(points.shape), labels, classes, "rings")


def load_cifar10_binary(paths: Sequence[str]) -> LabeledDataset:
    """Read CIFAR-10 binary batches: 1 label byte + 3072 pixel bytes per record.

    Pixels (1024 R, then G, then B, each row-major 32×32) are scaled to [0, 1]
    by dividing by 255.

    Raises:
        BadFileSize: if a file is not a whole number of 3073-byte records.
        BadLabel: if a label byte exceeds 9.
    """
    features, labels = [], []
    for path in paths:
        with open(path, "rb") as file:
            payload = file.read()
        if len(payload) % CIFAR_RECORD_BYTES:
            raise BadFileSize(f"{path}: {len(payload)} bytes is not a multiple of {CIFAR_RECORD_BYTES}")
        records = np.frombuffer(payload, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        bad = np.flatnonzero(records[:, 0] >= CIFAR_CLASSES)
        if bad.size:
            raise BadLabel(f"{path}: record {bad[0]} has label byte {records[bad[0], 0]}")
        logger.debug("Read %d CIFAR-10 records from %s", records.shape[0], path)
        labels.append(records[:, 0].astype(np.int64))
        features.append(records[:, 1:].astype(np.float64) / 255.0)
    if not features:
        return LabeledDataset(np.zeros((0, CIFAR_PIXELS)), np.zeros(0, dtype=np.int64), CIFAR_CLASSES, "cifar10")
    return LabeledDataset(np.concatenate(features), np.concatenate(labels), CIFAR_CLASSES, "cifar10")


def write_cifar10_binary(dataset: LabeledDataset, path: str):
    """Write `dataset` in the CIFAR-10 record layout, pixels quantized to 1/255."""
    if dataset.dim != CIFAR_PIXELS:
        raise ValueError(f"CIFAR-10 records hold {CIFAR_PIXELS} pixels, dataset has {dataset.dim}")
    if dataset.labels.size and dataset.labels.max() >= CIFAR_CLASSES:
        raise BadLabel(f"Label {dataset.labels.max()} does not fit the CIFAR-10 format")
    records = np.empty((dataset.n, CIFAR_RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = dataset.labels
    records[:, 1:] = np.clip(np.rint(dataset.features * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as file:
        file.write(records.tobytes())


def save_csv(dataset: LabeledDataset, path: str):
    """Export as a `name,n,d,c` header line followed by `label,f1,...,fd` rows."""
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow([dataset.name, dataset.n, dataset.dim, dataset.class_count])
        for label, row in zip(dataset.labels, dataset.features):
            writer.writerow([int(label)] + [repr(float(value)) for value in row])


def load_csv(path: str) -> LabeledDataset:
    """Read a dataset written by `save_csv`.

    Raises:
        MalformedDataset: if the header is missing or the rows disagree with it.
    """
    with open(path, encoding="utf-8", newline="") as file:
        reader = csv.reader(file)
        header = next(reader, None)
        rows = [row for row in reader if row]
    if not header or len(header) != 4:
        raise MalformedDataset(f"{path}: expected a 'name,n,d,c' header line, got {header}")
    name = header[0]
    try:
        n, dim, class_count = (int(value) for value in header[1:])
        if len(rows) != n:
            raise MalformedDataset(f"{path}: header announces {n} rows, found {len(rows)}")
        labels = np.array([int(row[0]) for row in rows], dtype=np.int64)
        features = np.array([[float(value) for value in row[1:]] for row in rows], dtype=np.float64)
        return LabeledDataset(features.reshape(n, dim), labels, class_count, name)
    except ValueError as ex:
        raise MalformedDataset(f"{path}: {ex}") from ex


def train_test_split(dataset: LabeledDataset, test_fraction: float, seed: int) -> Tuple[LabeledDataset, LabeledDataset]:
    """Seeded random split into a training part and a held-out part."""
    _require(0.0 <= test_fraction < 1.0, "data.test_fraction", f"must lie in [0, 1), got {test_fraction}")
    order = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,))).permutation(dataset.n)
    test_count = int(round(dataset.n * test_fraction))
    return (
        dataset.subset(np.sort(order[test_count:]), f"{dataset.name}-train"),
        dataset.subset(np.sort(order[:test_count]), f"{dataset.name}-test"),
    )


@dataclass
class Standardizer:
    """Per-dimension affine map to zero mean and unit variance."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, dataset: LabeledDataset) -> "Standardizer":
        """Estimate mean and standard deviation on `dataset`; constant dimensions keep scale 1."""
        std = dataset.features.std(axis=0)
        return cls(dataset.features.mean(axis=0), np.where(std > 0.0, std, 1.0))

    def apply(self, dataset: LabeledDataset) -> LabeledDataset:
        """Standardized copy of `dataset`."""
        return replace(dataset, features=(dataset.features - self.mean) / self.scale)


def standardize(train: LabeledDataset, *others: LabeledDataset) -> List[LabeledDataset]:
    """Fit on `train` and apply the same map to every dataset given."""
    standardizer = Standardizer.fit(train)
    return [standardizer.apply(dataset) for dataset in (train,) + others]


def augment(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """One augmented view: random scale, additive noise, random coordinate masking."""
    view = np.array(x, dtype=np.float64)
    if cfg.scale_jitter > 0:
        view = view * rng.uniform(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter)
    if cfg.noise_sigma > 0:
        view = view + rng.normal(0.0, cfg.noise_sigma, size=view.shape)
    if cfg.mask_prob > 0:
        view = np.where(rng.random(view.shape) < cfg.mask_prob, 0.0, view)
    return view


def two_views(x: np.ndarray, cfg: AugmentConfig, rng: KeyedRandom) -> Tuple[np.ndarray, np.ndarray]:
    """Two independent views t(x), t'(x); `rng` is scoped to one sample."""
    return augment(x, cfg, rng.stream(0)), augment(x, cfg, rng.stream(1))


def view_batch(features: Matrix, indices: Sequence[int], cfg: AugmentConfig, rng: KeyedRandom) -> Matrix:
    """`cat([t(x_batch), t'(x_batch)])` for the samples at `indices`.

    Streams are keyed by the dataset index of each sample, so a view depends
    on the sample and not on its position within the batch.
    """
    first, second = [], []
    for index in indices:
        view_a, view_b = two_views(features[index], cfg, rng.child(int(index)))
        first.append(view_a)
        second.append(view_b)
    return np.concatenate([np.stack(first), np.stack(second)], axis=0)
