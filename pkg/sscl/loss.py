"""Batch-level contrastive losses: plain InfoNCE and the full SSCL objective.

`sscl_loss` records the whole computation on an autodiff tape, so gradients
reach the encoder through the real negatives, the positive and the
synthetic negatives (which are differentiable functions of their parents).
Index selections and mixing coefficients are constants of the tape.

The five `LossMode` values reproduce the ablation family: each mode pins the
weight mode and switches τ and k on or off.
"""

import enum
import logging
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from sscl.autodiff import Tape
from sscl.core import Matrix, as_matrix, similarity_matrix
from sscl.errors import InvalidTau, ShapeMismatch
from sscl.negatives import (
    LossParams,
    NegativeSet,
    WeightMode,
    build_negative_set,
    negative_floor,
    negative_mask,
    positive_index,
)
from sscl.rng import KeyedRandom

logger = logging.getLogger(__name__)


class LossMode(str, enum.Enum):
    """Ablation modes, from plain contrastive learning to the complete objective."""

    BASELINE = "baseline"
    SYNTH = "synth"
    SYNTH_DEBIAS = "synth_debias"
    SAMPLING = "sampling"
    SSCL = "sscl"

    @property
    def label(self) -> str:
        """Row label used in comparison tables."""
        return _LABELS[self]

    def resolve(self, params: LossParams) -> LossParams:
        """Pin weight mode, τ and k of `params` to what this mode allows."""
        weight_mode, use_tau, use_k = _MODE_TABLE[self]
        return replace(
            params,
            weight_mode=weight_mode,
            tau=params.tau if use_tau else 0.0,
            k=params.k if use_k else 0,
        )

    @classmethod
    def choices(cls) -> List[str]:
        """Valid mode strings."""
        return [mode.value for mode in cls]


_MODE_TABLE = {
    LossMode.BASELINE: (WeightMode.UNIFORM, False, False),
    LossMode.SYNTH: (WeightMode.UNIFORM, False, True),
    LossMode.SYNTH_DEBIAS: (WeightMode.UNIFORM, True, True),
    LossMode.SAMPLING: (WeightMode.SIMILARITY, True, False),
    LossMode.SSCL: (WeightMode.SIMILARITY, True, True),
}

_LABELS = {
    LossMode.BASELINE: "baseline",
    LossMode.SYNTH: "w/ synthesis",
    LossMode.SYNTH_DEBIAS: "w/ synthesis+debias",
    LossMode.SAMPLING: "w/ sampling",
    LossMode.SSCL: "sscl",
}


@dataclass
class LossResult:
    """Outcome of one SSCL loss evaluation.

    Attributes:
        loss: Mean loss over the 2N anchors.
        per_anchor: Loss of every anchor, in batch order.
        negative_sets: The per-anchor negative sets that were used.
        log_arguments: pos / (pos + Neg) of every anchor.
        tape: Tape holding the recorded computation.
        node: Id of the scalar loss node on `tape`.
    """

    loss: float
    per_anchor: np.ndarray
    negative_sets: List[NegativeSet]
    log_arguments: np.ndarray
    tape: Tape
    node: int


def _check_batch(z_all: Matrix):
    if z_all.shape[0] < 2 or z_all.shape[0] % 2:
        raise ShapeMismatch("The feature block needs 2N rows, N >= 1", got=z_all.shape)


def info_nce(z_all: Matrix, params: LossParams) -> float:
    """Mean over all 2N anchors of -log(pos / (pos + Σ exp(sim/r))) with plain negatives."""
    z_all = as_matrix(z_all)
    _check_batch(z_all)
    rows = z_all.shape[0]
    scaled = np.exp(similarity_matrix(z_all, z_all) / params.r)
    anchors = np.arange(rows)
    pos = scaled[anchors, (anchors + rows // 2) % rows]
    mask = np.stack([negative_mask(rows, anchor) for anchor in anchors])
    neg = np.where(mask, scaled, 0.0).sum(axis=1)
    return float(np.mean(-np.log(pos / (pos + neg))))


def _weighted_exp(tape: Tape, sims_over_r: int, params: LossParams) -> int:
    scaled = tape.exp(sims_over_r)
    if params.weight_mode is WeightMode.UNIFORM:
        return scaled
    return tape.mul(tape.scale(scaled, params.beta), scaled)


def sscl_loss_on_tape(
    tape: Tape,
    z_node: int,
    params: LossParams,
    rng: Optional[KeyedRandom] = None,
    negative_sets: Optional[List[NegativeSet]] = None,
) -> LossResult:
    """Record the complete SSCL loss for the 2N×d unit-row block at `z_node`.

    Args:
        tape: Tape to record on.
        z_node: Node holding `cat([z1, z2])`.
        params: Loss hyperparameters (already resolved for a mode).
        rng: Per-step stream factory; anchor `a` draws from `rng.stream(a)`.
            Only used when synthesizing and `negative_sets` is not given;
            defaults to `KeyedRandom(0)`.
        negative_sets: Previously drawn negative sets to reuse, which freezes
            selection and mixing (used by gradient checks).
    """
    if not 0.0 <= params.tau < 1.0:
        raise InvalidTau(f"Class probability must lie in [0, 1), got {params.tau}")
    z_all = tape.value(z_node)
    _check_batch(z_all)
    rows = z_all.shape[0]
    count = rows - 2 + params.k

    sims = tape.matmul(z_node, tape.transpose(z_node))
    if negative_sets is None:
        if rng is None and params.k > 0:
            rng = KeyedRandom(0)
        sim_values = tape.value(sims)
        negative_sets = [
            build_negative_set(z_all, sim_values[anchor], anchor, params, rng.stream(anchor) if rng else None)
            for anchor in range(rows)
        ]

    partners = [positive_index(rows, anchor) for anchor in range(rows)]
    pos_over_r = tape.divide(tape.row_sum(tape.mul(z_node, tape.take_rows(z_node, partners))), params.r)
    pos_exp = tape.exp(pos_over_r)

    mask = tape.constant(np.stack([negative_mask(rows, anchor) for anchor in range(rows)]).astype(np.float64))
    weighted_sum = tape.row_sum(tape.mul(_weighted_exp(tape, tape.divide(sims, params.r), params), mask))

    if params.k > 0:
        ordered = sorted(negative_sets, key=lambda negative_set: negative_set.anchor_index)
        for p in range(params.k):
            first = [negative_set.parents[p][0] for negative_set in ordered]
            second = [negative_set.parents[p][1] for negative_set in ordered]
            alpha = np.array([[negative_set.alpha_draws[p]] for negative_set in ordered])
            mixed = tape.add(
                tape.mul(tape.take_rows(z_node, first), tape.constant(alpha)),
                tape.mul(tape.take_rows(z_node, second), tape.constant(1.0 - alpha)),
            )
            # row a of the p-th synthetic block belongs to anchor a
            synthetic_sims = tape.row_sum(tape.mul(z_node, tape.normalize_rows(mixed)))
            weighted_sum = tape.add(weighted_sum, _weighted_exp(tape, tape.divide(synthetic_sims, params.r), params))

    negative_term = tape.divide(
        tape.sub(weighted_sum, tape.scale(pos_exp, params.tau * count)),
        1.0 - params.tau,
    )
    if params.clamp_floor_enabled:
        negative_term = tape.clamp_min(negative_term, negative_floor(count, params.r))

    denominator = tape.add(pos_exp, negative_term)
    per_anchor = tape.sub(tape.log(denominator), pos_over_r)
    loss = tape.divide(tape.sum(per_anchor), rows)

    return LossResult(
        loss=float(tape.value(loss)),
        per_anchor=tape.value(per_anchor).ravel().copy(),
        negative_sets=negative_sets,
        log_arguments=(tape.value(pos_exp) / tape.value(denominator)).ravel(),
        tape=tape,
        node=loss,
    )


def sscl_loss(
    z_all: Matrix,
    params: LossParams,
    rng: Optional[KeyedRandom] = None,
    negative_sets: Optional[List[NegativeSet]] = None,
) -> LossResult:
    """The SSCL loss of a fixed 2N×d block of unit rows (no parameters involved)."""
    tape = Tape()
    return sscl_loss_on_tape(tape, tape.constant(as_matrix(z_all)), params, rng, negative_sets)
