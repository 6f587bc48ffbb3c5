"""The pretraining loop: batching, two-view encoding, SSCL loss and SGD.

Every epoch shuffles the dataset with the `("shuffle", epoch)` stream, cuts it
into batches of N samples (the last incomplete batch is dropped), builds the
2N augmented views, embeds them through g_θ∘f_θ, evaluates the loss of the
configured `LossMode`, back-propagates and takes one SGD step. The learning
rate warms up linearly and then follows a cosine decay, per step.
"""

import csv
import logging
import math
import pathlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from sscl.autodiff import ParamSet, Tape, backward
from sscl.data import AugmentConfig, LabeledDataset, view_batch
from sscl.errors import ConfigValidationError, DatasetTooSmall
from sscl.loss import LossMode, sscl_loss_on_tape
from sscl.model import EncoderConfig, ModelParams, encode_on_tape, init_params, project_on_tape, save_checkpoint
from sscl.negatives import AuditWriter, LossParams
from sscl.rng import KeyedRandom

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Pretraining schedule and optimizer settings.

    `base_lr` defaults to 0.1·N/256. Weight decay is coupled L2 inside the
    SGD update.
    """

    batch_n: int = 256
    epochs: int = 200
    warmup_epochs: int = 20
    base_lr: Optional[float] = None
    warmup_start_lr: float = 1e-4
    weight_decay: float = 1e-3
    momentum: float = 0.9
    loss: LossParams = field(default_factory=LossParams)
    mode: LossMode = LossMode.SSCL
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        """Fill in the derived learning rate and coerce the mode."""
        self.mode = LossMode(self.mode)
        if self.base_lr is None:
            self.base_lr = 0.1 * self.batch_n / 256

    def validate(self):
        """Raise ConfigValidationError listing every setting out of range."""
        failures = []
        if self.batch_n < 1:
            failures.append(("train.batch_n", f"must be >= 1, got {self.batch_n}"))
        if self.epochs < 0:
            failures.append(("train.epochs", f"must be >= 0, got {self.epochs}"))
        if self.warmup_epochs < 0 or (self.epochs > 0 and self.warmup_epochs >= self.epochs):
            failures.append(("train.warmup_epochs", f"must lie in [0, epochs), got {self.warmup_epochs}"))
        if not self.base_lr > 0:
            failures.append(("train.base_lr", f"must be > 0, got {self.base_lr}"))
        if self.warmup_start_lr < 0:
            failures.append(("train.warmup_start_lr", f"must be >= 0, got {self.warmup_start_lr}"))
        if self.weight_decay < 0:
            failures.append(("train.weight_decay", f"must be >= 0, got {self.weight_decay}"))
        if not 0.0 <= self.momentum < 1.0:
            failures.append(("train.momentum", f"must lie in [0, 1), got {self.momentum}"))
        if self.checkpoint_every < 0:
            failures.append(("train.checkpoint_every", f"must be >= 0, got {self.checkpoint_every}"))
        try:
            self.mode.resolve(self.loss).validate()
        except ConfigValidationError as ex:
            failures.extend(ex.failures)
        if failures:
            raise ConfigValidationError(failures=failures)
        return self

    def resolved_loss(self) -> LossParams:
        """The loss parameters with τ, k and the weight mode pinned by `mode`."""
        return self.mode.resolve(self.loss)


@dataclass
class EpochMetrics:
    """One row of the metrics history; `lr` is the rate of the epoch's first step."""

    epoch: int
    mean_loss: float
    lr: float


def lr_at(step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    """Learning rate of global `step`: linear warmup, then cosine decay to 0."""
    if steps_per_epoch < 1:
        raise ValueError(f"steps_per_epoch must be >= 1, got {steps_per_epoch}")
    warmup_steps = cfg.warmup_epochs * steps_per_epoch
    if step < warmup_steps:
        return cfg.warmup_start_lr + (cfg.base_lr - cfg.warmup_start_lr) * step / warmup_steps
    decay_steps = max(1, cfg.epochs * steps_per_epoch - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / decay_steps)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def sgd_step(params: ParamSet, buffers: Dict[str, np.ndarray], lr: float, momentum: float, weight_decay: float):
    """One momentum SGD update, in place.

    buffer ← momentum·buffer + (grad + weight_decay·param); param ← param - lr·buffer
    """
    for name, value in params.items():
        update = params.grad(name) + weight_decay * value
        if name in buffers:
            buffers[name] = momentum * buffers[name] + update
        else:
            buffers[name] = update.copy()
        value -= lr * buffers[name]
    return params


class SGD:
    """Momentum SGD owning the momentum buffers of one ParamSet."""

    def __init__(self, params: ParamSet, momentum: float = 0.9, weight_decay: float = 0.0):
        """Attach to `params`; buffers start at zero."""
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buffers: Dict[str, np.ndarray] = {name: np.zeros_like(value) for name, value in params.items()}

    def zero_grad(self):
        """Reset the gradients of the attached parameters."""
        self.params.zero_grad()

    def step(self, lr: float):
        """Apply one update with the gradients currently accumulated."""
        sgd_step(self.params, self.buffers, lr, self.momentum, self.weight_decay)


class MetricsWriter:
    """Incremental `epoch,mean_loss,lr` CSV writer."""

    header = ("epoch", "mean_loss", "lr")

    def __init__(self, path):
        """Create `path` and write the header row."""
        self.path = path
        self._file = open(path, "w", encoding="utf-8", newline="")  # pylint: disable=consider-using-with
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(self.header)
        self._file.flush()

    def write(self, metrics: EpochMetrics):
        """Append one epoch and flush."""
        self._writer.writerow([metrics.epoch, repr(metrics.mean_loss), repr(metrics.lr)])
        self._file.flush()

    def close(self):  # noqa: D102
        self._file.close()

    def __enter__(self):
        """Use the writer as a context manager."""
        return self

    def __exit__(self, *exc_info):
        """Close the file."""
        self.close()


def _epoch_checkpoint_path(checkpoint_path, epoch: int) -> pathlib.Path:
    path = pathlib.Path(checkpoint_path)
    return path.with_name(f"{path.stem}-epoch{epoch:04d}{path.suffix}")


def train_step(
    model: ModelParams,
    views: np.ndarray,
    loss_params: LossParams,
    rng: KeyedRandom,
    optimizer: SGD,
    lr: float,
):
    """Forward, backward and update on one 2N-row block of views.

    Returns:
        LossResult: the evaluated loss, before the parameter update.
    """
    optimizer.zero_grad()
    tape = Tape(model.params)
    features = encode_on_tape(tape, model, tape.constant(views))
    result = sscl_loss_on_tape(tape, project_on_tape(tape, model, features), loss_params, rng)
    backward(tape, result.node, model.params)
    optimizer.step(lr)
    return result


def pretrain(  # pylint: disable=too-many-arguments,too-many-locals
    dataset: LabeledDataset,
    model_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    augment_cfg: Optional[AugmentConfig] = None,
    metrics_path=None,
    audit_path=None,
    checkpoint_path=None,
    run_config: Optional[dict] = None,
) -> Tuple[ModelParams, List[EpochMetrics]]:
    """Train f_θ and g_θ with the configured loss, then discard g_θ.

    Args:
        dataset: Training samples; labels are ignored.
        model_cfg: Encoder and projection shape.
        train_cfg: Schedule, optimizer and loss settings.
        augment_cfg: Strength of the view augmentations.
        metrics_path: When given, the metrics CSV is written there incrementally.
        audit_path: When given, every anchor's negative set is dumped there as JSON lines.
        checkpoint_path: When given, the final encoder is written there, and the
            full model every `checkpoint_every` epochs next to it.
        run_config: Resolved configuration stored in checkpoint headers.

    Raises:
        DatasetTooSmall: if the dataset holds fewer samples than one batch.

    Returns:
        Tuple[ModelParams, List[EpochMetrics]]: encoder-only parameters and per-epoch metrics.
    """
    augment_cfg = (augment_cfg or AugmentConfig()).validate()
    train_cfg.validate()
    loss_params = train_cfg.resolved_loss()
    if dataset.n < train_cfg.batch_n:
        raise DatasetTooSmall(f"{dataset.n} samples cannot fill a batch of {train_cfg.batch_n}")

    model = init_params(model_cfg)
    optimizer = SGD(model.params, train_cfg.momentum, train_cfg.weight_decay)
    rng = KeyedRandom(train_cfg.seed)
    steps_per_epoch = dataset.n // train_cfg.batch_n
    history: List[EpochMetrics] = []
    metrics = MetricsWriter(metrics_path) if metrics_path else None
    audit = AuditWriter(audit_path) if audit_path else None
    logger.info(
        "Pretraining %s (%d samples) with %d parameters in mode %s for %d epochs of %d steps",
        dataset.name,
        dataset.n,
        model.params.size(),
        train_cfg.mode.value,
        train_cfg.epochs,
        steps_per_epoch,
    )
    try:
        for epoch in range(train_cfg.epochs):
            order = rng.stream("shuffle", epoch).permutation(dataset.n)
            losses = []
            for step in range(steps_per_epoch):
                indices = order[step * train_cfg.batch_n : (step + 1) * train_cfg.batch_n]
                views = view_batch(dataset.features, indices, augment_cfg, rng.child("view", epoch, step))
                lr = lr_at(epoch * steps_per_epoch + step, steps_per_epoch, train_cfg)
                result = train_step(model, views, loss_params, rng.child("negatives", epoch, step), optimizer, lr)
                losses.append(result.loss)
                if audit:
                    audit.write(epoch, step, result.negative_sets)
            first_lr = lr_at(epoch * steps_per_epoch, steps_per_epoch, train_cfg)
            record = EpochMetrics(epoch, float(np.mean(losses)), first_lr)
            history.append(record)
            logger.info("epoch %d mean_loss=%.6f lr=%.6g", record.epoch, record.mean_loss, record.lr)
            if metrics:
                metrics.write(record)
            if checkpoint_path and train_cfg.checkpoint_every and (epoch + 1) % train_cfg.checkpoint_every == 0:
                save_checkpoint(_epoch_checkpoint_path(checkpoint_path, epoch + 1), model, run_config)
    finally:
        if metrics:
            metrics.close()
        if audit:
            audit.close()

    encoder = model.encoder_only()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, encoder, run_config)
    return encoder, history
