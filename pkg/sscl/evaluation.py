"""Linear evaluation of a frozen encoder, top-k accuracy and embedding export."""

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from sscl.autodiff import ParamSet, Tape, backward
from sscl.core import Matrix, as_matrix
from sscl.data import LabeledDataset
from sscl.errors import ConfigValidationError, DegenerateLabels, ShapeMismatch
from sscl.model import ModelParams, encode
from sscl.rng import KeyedRandom
from sscl.train import SGD

logger = logging.getLogger(__name__)

PCA_TOLERANCE = 1e-9
PCA_MAX_ITERATIONS = 10_000


@dataclass
class ProbeConfig:
    """Settings of the linear classifier trained on frozen features."""

    epochs: int = 100
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_n: int = 256
    seed: int = 0
    standardize: bool = True

    def validate(self):
        """Raise ConfigValidationError listing every setting out of range."""
        failures = []
        if self.epochs < 1:
            failures.append(("probe.epochs", f"must be >= 1, got {self.epochs}"))
        if not self.lr > 0:
            failures.append(("probe.lr", f"must be > 0, got {self.lr}"))
        if not 0.0 <= self.momentum < 1.0:
            failures.append(("probe.momentum", f"must lie in [0, 1), got {self.momentum}"))
        if self.weight_decay < 0:
            failures.append(("probe.weight_decay", f"must be >= 0, got {self.weight_decay}"))
        if self.batch_n < 1:
            failures.append(("probe.batch_n", f"must be >= 1, got {self.batch_n}"))
        if failures:
            raise ConfigValidationError(failures=failures)
        return self


@dataclass
class ProbeResult:
    """A trained linear classifier.

    Attributes:
        weights: d×c weight matrix.
        bias: c class offsets.
        history: Mean cross-entropy of every epoch.
        train_accuracy: Top-1 accuracy on the training features after the last epoch.
        feature_mean: Offset subtracted from features before scoring.
        feature_scale: Per-dimension divisor applied after the offset.
    """

    weights: Matrix
    bias: np.ndarray
    history: List[float] = field(default_factory=list)
    train_accuracy: float = 0.0
    feature_mean: Optional[np.ndarray] = None
    feature_scale: Optional[np.ndarray] = None

    @property
    def class_count(self) -> int:
        """Number of classes the classifier scores."""
        return self.weights.shape[1]

    def scores(self, features: Matrix) -> Matrix:
        """Class scores (logits), one row per sample."""
        features = as_matrix(features, self.weights.shape[0])
        if self.feature_mean is not None:
            features = (features - self.feature_mean) / self.feature_scale
        return features @ self.weights + self.bias

    def accuracy(self, features: Matrix, labels: Sequence[int]) -> Tuple[float, float]:
        """Top-1 and top-5 accuracy (top-5 capped at the class count)."""
        scores = self.scores(features)
        return topk_accuracy(scores, labels, 1), topk_accuracy(scores, labels, min(5, self.class_count))


def extract_features(model: ModelParams, data: Union[LabeledDataset, Matrix]) -> Matrix:
    """Raw f_θ outputs of a frozen encoder, one row per sample."""
    features = data.features if isinstance(data, LabeledDataset) else data
    return encode(model, features)


def _cross_entropy_on_tape(tape: Tape, x: np.ndarray, onehot: np.ndarray) -> int:
    logits = tape.bias_add(tape.matmul(tape.constant(x), tape.param("weight")), tape.param("bias"))
    # the row max only shifts log-sum-exp, so it is held constant
    shifted = tape.sub(logits, tape.constant(tape.value(logits).max(axis=1, keepdims=True)))
    log_normalizer = tape.log(tape.row_sum(tape.exp(shifted)))
    correct = tape.row_sum(tape.mul(shifted, tape.constant(onehot)))
    return tape.divide(tape.sum(tape.sub(log_normalizer, correct)), x.shape[0])


def linear_probe(
    features: Matrix, labels: Sequence[int], cfg: ProbeConfig, class_count: Optional[int] = None
) -> ProbeResult:
    """Train a softmax linear classifier on frozen features with momentum SGD.

    The learning rate follows a per-step cosine schedule from `cfg.lr` to 0.
    Weights start at zero, so the result only depends on the shuffling
    streams `("probe", epoch)`.
    With `cfg.standardize` the classifier is trained on features shifted to
    zero mean and unit variance (fit on `features`); the returned result
    applies the same map when scoring.

    Raises:
        ShapeMismatch: if features and labels disagree in length.
        DegenerateLabels: if fewer than two classes are present.
    """
    cfg.validate()
    features = as_matrix(features)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (features.shape[0],):
        raise ShapeMismatch("One label per feature row", expected=features.shape[0], got=labels.shape)
    if np.unique(labels).size < 2:
        raise DegenerateLabels("The probe needs at least two distinct classes")
    class_count = class_count or int(labels.max()) + 1
    onehot = np.eye(class_count)[labels]
    raw_features = features
    mean, scale = None, None
    if cfg.standardize:
        std = features.std(axis=0)
        mean, scale = features.mean(axis=0), np.where(std > 0.0, std, 1.0)
        features = (features - mean) / scale

    params = ParamSet({"weight": np.zeros((features.shape[1], class_count)), "bias": np.zeros(class_count)})
    optimizer = SGD(params, cfg.momentum, cfg.weight_decay)
    rng = KeyedRandom(cfg.seed)
    batch_n = min(cfg.batch_n, features.shape[0])
    steps_per_epoch = math.ceil(features.shape[0] / batch_n)
    total_steps = cfg.epochs * steps_per_epoch
    history = []
    for epoch in range(cfg.epochs):
        order = rng.stream("probe", epoch).permutation(features.shape[0])
        losses = []
        for step in range(steps_per_epoch):
            batch = order[step * batch_n : (step + 1) * batch_n]
            lr = cfg.lr * 0.5 * (1.0 + math.cos(math.pi * (epoch * steps_per_epoch + step) / total_steps))
            optimizer.zero_grad()
            tape = Tape(params)
            loss = _cross_entropy_on_tape(tape, features[batch], onehot[batch])
            backward(tape, loss, params)
            optimizer.step(lr)
            losses.append(float(tape.value(loss)))
        history.append(float(np.mean(losses)))
        logger.debug("probe epoch %d cross_entropy=%.6f", epoch, history[-1])

    result = ProbeResult(
        params["weight"].copy(), params["bias"].copy(), history, feature_mean=mean, feature_scale=scale
    )
    result.train_accuracy = topk_accuracy(result.scores(raw_features), labels, 1)
    logger.info("Linear probe trained for %d epochs, train top-1 %.4f", cfg.epochs, result.train_accuracy)
    return result


def topk_accuracy(scores: Matrix, labels: Sequence[int], k: int) -> float:
    """Fraction of rows whose label is among the k highest scores, ties to the lower class index."""
    scores = as_matrix(scores) if len(scores) else np.zeros((0, k))
    labels = np.asarray(labels, dtype=np.int64)
    if not 1 <= k <= scores.shape[1]:
        raise ValueError(f"k must lie in [1, {scores.shape[1]}], got {k}")
    if labels.shape != (scores.shape[0],):
        raise ShapeMismatch("One label per score row", expected=scores.shape[0], got=labels.shape)
    if not labels.size:
        return 0.0
    ranked = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(ranked == labels[:, None], axis=1)))


def export_embeddings(features: Matrix, labels: Sequence[int], path):
    """Write `label,f1,...,fd` rows, one per sample."""
    features = as_matrix(features)
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        for label, row in zip(labels, features):
            writer.writerow([int(label)] + [repr(float(value)) for value in row])


def _orthogonalize(vector: np.ndarray, basis: Iterable[np.ndarray]) -> np.ndarray:
    for other in basis:
        vector = vector - (vector @ other) * other
    return vector


def _fallback_direction(dim: int, basis: List[np.ndarray]) -> np.ndarray:
    # a coordinate axis with the largest residual always completes the basis
    residuals = [_orthogonalize(np.eye(dim)[axis], basis) for axis in range(dim)]
    best = max(residuals, key=np.linalg.norm)
    return best / np.linalg.norm(best)


def principal_components(features: Matrix, count: int) -> Tuple[Matrix, np.ndarray]:
    """Top `count` principal directions by power iteration with deflation.

    Each iteration starts from the largest column of the deflated covariance
    and stops once successive iterates differ by less than 1e-9. Directions
    of zero variance are completed with coordinate axes.

    Returns:
        Tuple[Matrix, np.ndarray]: count×d orthonormal directions and their variances.
    """
    features = as_matrix(features)
    n, dim = features.shape
    if n < 2:
        raise ValueError(f"Principal components need at least 2 samples, got {n}")
    if not 1 <= count <= dim:
        raise ValueError(f"count must lie in [1, {dim}], got {count}")
    centered = features - features.mean(axis=0)
    covariance = centered.T @ centered / n
    null_level = 1e-12 * max(1.0, float(np.trace(covariance)))

    components: List[np.ndarray] = []
    variances = []
    for _ in range(count):
        projector = np.eye(dim) - sum((np.outer(other, other) for other in components), np.zeros((dim, dim)))
        deflated = projector @ covariance @ projector
        column_norms = np.linalg.norm(deflated, axis=0)
        start = int(np.argmax(column_norms))
        if column_norms[start] < null_level:
            vector = _fallback_direction(dim, components)
        else:
            vector = deflated[:, start] / column_norms[start]
            for _ in range(PCA_MAX_ITERATIONS):
                candidate = _orthogonalize(deflated @ vector, components)
                norm = np.linalg.norm(candidate)
                if norm < null_level:
                    break
                candidate /= norm
                converged = np.linalg.norm(candidate - vector) < PCA_TOLERANCE
                vector = candidate
                if converged:
                    break
        vector = _orthogonalize(vector, components)
        vector /= np.linalg.norm(vector)
        components.append(vector)
        variances.append(float(vector @ covariance @ vector))
    return np.stack(components), np.array(variances)


def pca2d(features: Matrix) -> Matrix:
    """Centered features projected onto the top two principal directions (n×2)."""
    features = as_matrix(features)
    components, _ = principal_components(features, 2)
    return (features - features.mean(axis=0)) @ components.T


def export_pca(features: Matrix, labels: Sequence[int], path):
    """Write `label,pc1,pc2` rows for external plotting."""
    projected = pca2d(features)
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(["label", "pc1", "pc2"])
        for label, (first, second) in zip(labels, projected):
            writer.writerow([int(label), repr(float(first)), repr(float(second))])


@dataclass
class ReportRow:
    """One line of an evaluation report."""

    method: str
    seed: int
    top1: float
    top5: float


def write_report(rows: Iterable[ReportRow], path, header: Sequence[str] = ("method", "seed", "top1", "top5")):
    """Write report rows as CSV; the first column takes the name of `header[0]`."""
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([row.method, row.seed, repr(row.top1), repr(row.top5)])
