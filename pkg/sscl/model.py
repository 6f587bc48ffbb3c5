"""The encoder f_θ and projection head g_θ, realized as small MLPs.

Parameters are registered in a `ParamSet` in declaration order::

    encoder.0.weight, encoder.0.bias, ..., encoder.{L-1}.bias,
    projection.0.weight, projection.0.bias, projection.1.weight, projection.1.bias

Weights have shape `(fan_in, fan_out)` so a layer computes `x @ W + b`.
"""

import io
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
import yaml

from sscl.autodiff import ParamSet, Tape
from sscl.core import Matrix, as_matrix
from sscl.errors import CheckpointError, ConfigValidationError, ShapeMismatch
from sscl.rng import KeyedRandom

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SSCLCKPT"
CHECKPOINT_VERSION = 1
ENCODER_PREFIX = "encoder."
PROJECTION_PREFIX = "projection."


@dataclass
class EncoderConfig:
    """Shape of the encoder and projection head.

    `feature_dim` is the width of the last encoder layer. The projection head
    is affine → relu → affine → L2 normalization; its hidden width defaults
    to `feature_dim`.
    """

    input_dim: int
    encoder_layers: List[int] = field(default_factory=lambda: [64, 64])
    projection_dim: int = 32
    projection_hidden_dim: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        """Validate the layer widths."""
        self.encoder_layers = [int(width) for width in self.encoder_layers]
        failures = []
        if self.input_dim < 1:
            failures.append(("model.input_dim", f"must be >= 1, got {self.input_dim}"))
        if not self.encoder_layers:
            failures.append(("model.encoder_layers", "needs at least one layer"))
        if any(width < 1 for width in self.encoder_layers):
            failures.append(("model.encoder_layers", f"all widths must be >= 1, got {self.encoder_layers}"))
        if self.projection_dim < 1:
            failures.append(("model.projection_dim", f"must be >= 1, got {self.projection_dim}"))
        if self.projection_hidden_dim is not None and self.projection_hidden_dim < 1:
            failures.append(("model.projection_hidden_dim", f"must be >= 1, got {self.projection_hidden_dim}"))
        if failures:
            raise ConfigValidationError(failures=failures)

    @property
    def feature_dim(self) -> int:
        """Width of the encoder output."""
        return self.encoder_layers[-1]

    @property
    def hidden_dim(self) -> int:
        """Width of the projection head's hidden layer."""
        return self.projection_hidden_dim or self.feature_dim

    def layer_shapes(self):
        """Yield `(prefix, index, fan_in, fan_out)` for every affine layer in declaration order."""
        widths = [self.input_dim] + self.encoder_layers
        for index, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            yield ENCODER_PREFIX, index, fan_in, fan_out
        yield PROJECTION_PREFIX, 0, self.feature_dim, self.hidden_dim
        yield PROJECTION_PREFIX, 1, self.hidden_dim, self.projection_dim

    def to_dict(self) -> dict:
        """Plain-data form, used in checkpoint headers."""
        return asdict(self)


@dataclass
class ModelParams:
    """The parameters of f_θ (and, until discarded, g_θ) plus their config."""

    config: EncoderConfig
    params: ParamSet

    @property
    def has_projection(self) -> bool:
        """Whether the projection head is still attached."""
        return f"{PROJECTION_PREFIX}0.weight" in self.params

    def encoder_only(self) -> "ModelParams":
        """A copy holding only the encoder parameters."""
        return ModelParams(self.config, self.params.subset(ENCODER_PREFIX))


def init_params(config: EncoderConfig) -> ModelParams:
    """Glorot-uniform weights, zero biases, deterministic in `config.seed`."""
    rng = KeyedRandom(config.seed).stream("init")
    params = ParamSet()
    for prefix, index, fan_in, fan_out in config.layer_shapes():
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        params.add(f"{prefix}{index}.weight", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.add(f"{prefix}{index}.bias", np.zeros(fan_out))
    return ModelParams(config, params)


def _affine(tape: Tape, x: int, prefix: str, index: int) -> int:
    return tape.bias_add(tape.matmul(x, tape.param(f"{prefix}{index}.weight")), tape.param(f"{prefix}{index}.bias"))


def encode_on_tape(tape: Tape, model: ModelParams, x: int) -> int:
    """Record f_θ(x): relu after every hidden layer, none after the last one."""
    width = tape.value(x).shape[1]
    if width != model.config.input_dim:
        raise ShapeMismatch("Encoder input width", expected=model.config.input_dim, got=width)
    layers = len(model.config.encoder_layers)
    for index in range(layers):
        x = _affine(tape, x, ENCODER_PREFIX, index)
        if index < layers - 1:
            x = tape.relu(x)
    return x


def project_on_tape(tape: Tape, model: ModelParams, features: int) -> int:
    """Record g_θ(features) followed by row L2 normalization."""
    width = tape.value(features).shape[1]
    if width != model.config.feature_dim:
        raise ShapeMismatch("Projection input width", expected=model.config.feature_dim, got=width)
    hidden = tape.relu(_affine(tape, features, PROJECTION_PREFIX, 0))
    return tape.normalize_rows(_affine(tape, hidden, PROJECTION_PREFIX, 1))


def encode(model: ModelParams, x: Matrix) -> Matrix:
    """f_θ(x), one feature row per input row."""
    tape = Tape(model.params)
    return tape.value(encode_on_tape(tape, model, tape.constant(as_matrix(x))))


def project(model: ModelParams, features: Matrix) -> Matrix:
    """g_θ(features) as unit-L2 rows of width `projection_dim`."""
    tape = Tape(model.params)
    return tape.value(project_on_tape(tape, model, tape.constant(as_matrix(features))))


def save_checkpoint(path, model: ModelParams, run_config: Optional[dict] = None):
    """Write the versioned checkpoint container (layout in docs/dev/checkpoint.md)."""
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": {"model": model.config.to_dict(), "run": run_config or {}},
        "params": [{"name": name, "shape": list(value.shape)} for name, value in model.params.items()],
    }
    header_bytes = yaml.safe_dump(header, sort_keys=True).encode("utf-8")
    buffer = io.BytesIO()
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(struct.pack("<I", len(header_bytes)))
    buffer.write(header_bytes)
    for _, value in model.params.items():
        buffer.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    with open(path, "wb") as file:
        file.write(buffer.getvalue())
    logger.debug("Wrote checkpoint %s with %d parameters", path, len(model.params))


def load_checkpoint(path):
    """Read a checkpoint container.

    Returns:
        Tuple[ModelParams, dict]: the model and the persisted run configuration.
    """
    try:
        with open(path, "rb") as file:
            payload = file.read()
    except OSError as ex:
        raise CheckpointError(f"Cannot read checkpoint {path}: {ex}") from ex
    if payload[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not an sscl checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    try:
        (header_length,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        header = yaml.safe_load(payload[offset : offset + header_length].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, yaml.YAMLError) as ex:
        raise CheckpointError(f"{path} has a corrupt header: {ex}") from ex
    offset += header_length
    if not isinstance(header, dict):
        raise CheckpointError(f"{path} has a corrupt header")
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {header.get('format_version')}")

    params = ParamSet()
    for entry in header["params"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(payload):
            raise CheckpointError(f"{path} is truncated at parameter {entry['name']}")
        values = np.frombuffer(payload[offset:end], dtype="<f8").reshape(entry["shape"])
        params.add(entry["name"], values)
        offset = end
    if offset != len(payload):
        raise CheckpointError(f"{path} has {len(payload) - offset} trailing bytes")
    config = EncoderConfig(**header["config"]["model"])
    return ModelParams(config, params), header["config"].get("run", {})
