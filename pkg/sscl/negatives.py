"""Hardest-negative selection, synthetic hard negatives, weighting and debiasing.

For one anchor z the negatives are the 2N-2 other embeddings of the batch.
The s most similar of them form the hardest set; k synthetic negatives are
normalized convex combinations of two distinct members of that set. Each
negative (real or synthetic) gets the weight β·exp(sim/r), and the weighted
sum is debiased with the class probability τ.
"""

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from sscl.core import Matrix, l2_normalize_rows, top_k_desc
from sscl.errors import ConfigValidationError, InsufficientParents, InvalidTau

logger = logging.getLogger(__name__)


class WeightMode(str, enum.Enum):
    """How negatives are weighted inside the negative term."""

    UNIFORM = "uniform"
    SIMILARITY = "similarity"


@dataclass
class LossParams:
    """Hyperparameters of the contrastive objective.

    Attributes:
        r: Temperature dividing every similarity inside exp.
        tau: Class probability τ used for debiasing, in [0, 1).
        beta: Weighting control factor β.
        s: Size of the hardest-negative set.
        k: Number of synthetic negatives per anchor.
        weight_mode: `uniform` (all weights 1) or `similarity` (β·exp(sim/r)).
        clamp_floor_enabled: Floor the debiased term at M·e^(-1/r).
    """

    r: float = 0.5
    tau: float = 0.1
    beta: float = 1.0
    s: int = 32
    k: int = 8
    weight_mode: WeightMode = WeightMode.SIMILARITY
    clamp_floor_enabled: bool = True

    def __post_init__(self):
        """Coerce the weight mode from its string form."""
        self.weight_mode = WeightMode(self.weight_mode)

    def validate(self):
        """Check the parameter ranges.

        Raises:
            ConfigValidationError: listing every parameter out of range.
        """
        failures = []
        if not self.r > 0:
            failures.append(("loss.r", f"temperature must be > 0, got {self.r}"))
        if not 0.0 <= self.tau < 1.0:
            failures.append(("loss.tau", f"class probability must lie in [0, 1), got {self.tau}"))
        if self.beta < 0:
            failures.append(("loss.beta", f"weighting factor must be >= 0, got {self.beta}"))
        if self.k < 0:
            failures.append(("loss.k", f"must be >= 0, got {self.k}"))
        if self.s < 0:
            failures.append(("loss.s", f"must be >= 0, got {self.s}"))
        if self.k > 0 and self.s < 2:
            failures.append(("loss.s", f"mixing needs at least two parents, got s={self.s}"))
        if failures:
            raise ConfigValidationError(failures=failures)
        return self


@dataclass
class NegativeSet:
    """The hardest negatives and synthetic negatives of one anchor.

    Attributes:
        anchor_index: Row of the anchor in the 2N×d feature block.
        hard_indices: Rows of the hardest negatives, most similar first.
        synthetic: k×d unit rows mixed from the hardest negatives.
        parents: k×2 feature rows (i, j) mixed into each synthetic row.
        alpha_draws: k mixing coefficients in (0, 1), the weight of parent i.
    """

    anchor_index: int
    hard_indices: np.ndarray
    synthetic: Matrix
    parents: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.intp))
    alpha_draws: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def k(self) -> int:
        """Number of synthetic negatives."""
        return int(self.alpha_draws.shape[0])

    def to_record(self, **extra) -> dict:
        """Plain-data record for the audit dump."""
        record = dict(extra)
        record.update(
            {
                "anchor": int(self.anchor_index),
                "hard_indices": [int(index) for index in self.hard_indices],
                "parents": [[int(i), int(j)] for i, j in self.parents],
                "alpha": [float(alpha) for alpha in self.alpha_draws],
            }
        )
        return record


def negative_mask(batch_size_2n: int, anchor: int) -> np.ndarray:
    """Candidates mask for `anchor`: everything except itself and its other view.

    Under the `cat([z1, z2])` layout the positive of row a is row
    `(a + n) mod 2n`.
    """
    if batch_size_2n % 2 or not 0 <= anchor < batch_size_2n:
        raise ValueError(f"Invalid anchor {anchor} for a batch of {batch_size_2n} rows")
    mask = np.ones(batch_size_2n, dtype=bool)
    mask[anchor] = False
    mask[positive_index(batch_size_2n, anchor)] = False
    return mask


def positive_index(batch_size_2n: int, anchor: int) -> int:
    """Row of the other view of `anchor`."""
    return (anchor + batch_size_2n // 2) % batch_size_2n


def select_hardest(sim_row: Sequence[float], mask: Sequence[bool], s: int) -> np.ndarray:
    """The `s` unmasked negatives most similar to the anchor, most similar first."""
    return top_k_desc(sim_row, mask, s)


def draw_mixing(hard_indices: Sequence[int], k: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Draw the parent pairs and mixing coefficients for `k` synthetic negatives.

    Each pair holds two distinct members of the hardest set, drawn uniformly;
    pairs may repeat across draws. α is uniform on the open interval (0, 1).

    Raises:
        InsufficientParents: if fewer than two hard negatives are available.

    Returns:
        Tuple[np.ndarray, np.ndarray]: `parents` (k×2 feature rows) and `alpha` (k,).
    """
    hard_indices = np.asarray(hard_indices, dtype=np.intp)
    if k <= 0:
        return np.zeros((0, 2), dtype=np.intp), np.zeros(0)
    if hard_indices.size < 2:
        raise InsufficientParents(f"Mixing needs two parents, only {hard_indices.size} available")
    first = rng.integers(0, hard_indices.size, size=k)
    second = rng.integers(0, hard_indices.size - 1, size=k)
    second = second + (second >= first)
    alpha = rng.random(k)
    while np.any(alpha == 0.0):
        zeros = alpha == 0.0
        alpha[zeros] = rng.random(int(zeros.sum()))
    parents = np.stack([hard_indices[first], hard_indices[second]], axis=1)
    return parents, alpha


def mix(features: Matrix, parents: np.ndarray, alpha: np.ndarray) -> Matrix:
    """normalize(α·z_i + (1-α)·z_j) for every row of `parents`."""
    if len(parents) == 0:
        return np.zeros((0, features.shape[1]))
    alpha = np.asarray(alpha, dtype=np.float64)[:, None]
    raw = alpha * features[parents[:, 0]] + (1.0 - alpha) * features[parents[:, 1]]
    return l2_normalize_rows(raw)


def synthesize(features: Matrix, hard_indices: Sequence[int], k: int, rng: np.random.Generator) -> Matrix:
    """k synthetic hard negatives mixed from the hardest set (k×d unit rows)."""
    if len(hard_indices) < 2:
        raise InsufficientParents(f"Mixing needs two parents, only {len(hard_indices)} available")
    parents, alpha = draw_mixing(hard_indices, k, rng)
    return mix(features, parents, alpha)


def build_negative_set(
    features: Matrix, sim_row: Sequence[float], anchor: int, params: LossParams, rng: Optional[np.random.Generator]
) -> NegativeSet:
    """Select the hardest negatives of `anchor` and synthesize `params.k` new ones."""
    mask = negative_mask(features.shape[0], anchor)
    if params.k > 0 or params.s > 0:
        hard = select_hardest(sim_row, mask, params.s) if mask.any() else np.zeros(0, dtype=np.intp)
    else:
        hard = np.zeros(0, dtype=np.intp)
    if params.k > 0:
        parents, alpha = draw_mixing(hard, params.k, rng)
    else:
        parents, alpha = np.zeros((0, 2), dtype=np.intp), np.zeros(0)
    return NegativeSet(anchor, hard, mix(features, parents, alpha), parents, alpha)


def pair_weights(sims, params: LossParams) -> np.ndarray:
    """Per-negative weights: β·exp(sim/r) in similarity mode, 1 in uniform mode."""
    sims = np.asarray(sims, dtype=np.float64)
    if params.weight_mode is WeightMode.UNIFORM:
        return np.ones_like(sims)
    return params.beta * np.exp(sims / params.r)


def negative_floor(count: int, r: float) -> float:
    """Smallest value the debiased term may take when clamping, M·e^(-1/r)."""
    return count * math.exp(-1.0 / r)


def debiased_negative_term(weighted_exp_sum, pos_exp, count: int, params: LossParams):
    """(Σ w̃·exp(sim/r) - τ·M·exp(sim⁺/r)) / (1-τ), optionally floored at M·e^(-1/r).

    Args:
        weighted_exp_sum: Weighted sum over real and synthetic negatives.
        pos_exp: exp(sim(z, z')/r) of the positive pair.
        count: M = 2N-2+k, the number of negatives.
        params: Supplies τ, r and the clamp flag.

    Raises:
        InvalidTau: if τ is outside of [0, 1).
    """
    if not 0.0 <= params.tau < 1.0:
        raise InvalidTau(f"Class probability must lie in [0, 1), got {params.tau}")
    value = (weighted_exp_sum - params.tau * count * pos_exp) / (1.0 - params.tau)
    if params.clamp_floor_enabled:
        value = np.maximum(value, negative_floor(count, params.r))
    return value


class AuditWriter:
    """Line-delimited JSON dump of every anchor's negative set, one record per anchor per step."""

    def __init__(self, path):
        """Open `path` for writing; the file is truncated."""
        self.path = path
        self._file = open(path, "w", encoding="utf-8")  # pylint: disable=consider-using-with

    def write(self, epoch: int, step: int, negative_sets: List[NegativeSet]):
        """Append the records of one training step."""
        for negative_set in negative_sets:
            self._file.write(json.dumps(negative_set.to_record(epoch=epoch, step=step), sort_keys=True))
            self._file.write("\n")

    def close(self):
        """Flush and close the dump."""
        self._file.close()

    def __enter__(self):
        """Use the writer as a context manager."""
        return self

    def __exit__(self, *exc_info):
        """Close the file."""
        self.close()
