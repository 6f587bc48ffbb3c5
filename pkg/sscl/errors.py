"""Module containing error Exception classes specific to SSCL."""

from collections import defaultdict
from typing import Dict, Iterable, List, Tuple


class SSCLError(Exception):
    """Base class for all errors raised by the sscl package."""


class ZeroRow(SSCLError):
    """Raised when a row cannot be L2-normalized because its norm is (numerically) zero."""

    def __init__(self, row: int, norm: float):
        """Create a ZeroRow error for the offending row index."""
        super().__init__(f"Row {row} has norm {norm:.3e}, cannot be normalized")
        self.row = row
        self.norm = norm


class DimensionMismatch(SSCLError):
    """Raised when two matrices do not share the required dimension."""


class ShapeMismatch(SSCLError):
    """Raised when an operand does not conform to the shape an operation expects."""

    def __init__(self, message, expected=None, got=None):
        """Constructor to populate exception with message and, optionally, the offending shapes."""
        if expected is not None and got is not None:
            message = f"{message}: expected {expected}, got {got}"
        super().__init__(message)
        self.expected = expected
        self.got = got


class EmptySelection(SSCLError):
    """Raised when a top-k selection has no unmasked candidate."""


class NonScalarLoss(ShapeMismatch):
    """Raised when backward is started from a node that is not a scalar."""


class InsufficientParents(SSCLError):
    """Raised when synthesis is asked to mix fewer than two hard negatives."""


class InvalidTau(SSCLError):
    """Raised when the class probability lies outside of [0, 1)."""


class BadFileSize(SSCLError):
    """Raised when a CIFAR-10 binary file is not a whole number of records."""


class BadLabel(SSCLError):
    """Raised when a CIFAR-10 record carries a label byte outside of 0-9."""


class DatasetTooSmall(SSCLError):
    """Raised when a dataset cannot fill a single batch."""


class DegenerateLabels(SSCLError):
    """Raised when a classifier is asked to fit labels from a single class."""


class CheckpointError(SSCLError):
    """Raised when a checkpoint container cannot be read."""


class MalformedDataset(SSCLError):
    """Raised when a dataset file does not follow the `name,n,d,c` CSV layout."""


def _error_msg(failures: Iterable[Tuple[str, str]]) -> Dict[str, List[str]]:
    errors = defaultdict(list)
    for path, message in failures:
        errors[path or "__all__"].append(message)
    return errors


class ConfigValidationError(SSCLError):
    """Exception indicating a run configuration failed validation checks.

    A ConfigValidationError can be raised by `validate_` methods of a
    `RunConfig` or while building the typed configuration objects. The
    failures are kept as `(dotted_path, message)` pairs so that a single
    error can report every problem in the configuration at once.
    """

    def __init__(self, message: str = "", path: str = None, failures: List[Tuple[str, str]] = None):
        """Initialize the error from a single message or a list of failures.

        Args:
            message: Message describing a single failure.
            path: Dotted configuration path of the failing key, e.g. `loss.tau`.
            failures: Already collected `(path, message)` pairs.
        """
        super().__init__(message)
        self.failures = list(failures or [])
        if message:
            self.failures.append((path, message))

    @property
    def paths(self) -> List[str]:
        """Dotted paths of every failing key."""
        return sorted({path for path, _ in self.failures if path})

    def __str__(self) -> str:
        """The string representation of the error, one bullet per failing key."""
        fields = _error_msg(self.failures)
        msg = ["Configuration failed validation"]
        for message in fields.pop("__all__", []):
            msg.append(f"  {message}")
        for key in sorted(fields.keys()):
            field_msg = "\n".join(fields[key])
            msg.append(f"  **{key}:** {field_msg}")
        return "\n\n".join(msg)
