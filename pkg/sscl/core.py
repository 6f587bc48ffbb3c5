"""Dense matrix primitives shared by every other module.

All matrices are float64 `numpy.ndarray` objects stored row-major. The
functions here are pure: inputs are never modified in place.
"""

from typing import Sequence

import numpy as np

from sscl.errors import DimensionMismatch, EmptySelection, ShapeMismatch, ZeroRow

Matrix = np.ndarray

ZERO_NORM = 1e-30
SIMILARITY_SLACK = 1e-9


def as_matrix(data, cols: int = None) -> Matrix:
    """Convert `data` to a finite, two dimensional float64 matrix.

    Args:
        data: Anything `numpy.asarray` accepts. A 1-D input becomes a single row.
        cols: When given, the required column count.

    Raises:
        ShapeMismatch: if the data is not 2-D, has the wrong width or contains NaN/Inf.

    Returns:
        Matrix: a contiguous float64 matrix.
    """
    matrix = np.ascontiguousarray(data, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2:
        raise ShapeMismatch("Matrix must be two dimensional", expected=2, got=matrix.ndim)
    if cols is not None and matrix.shape[1] != cols:
        raise ShapeMismatch("Wrong column count", expected=cols, got=matrix.shape[1])
    if not np.all(np.isfinite(matrix)):
        raise ShapeMismatch("Matrix contains non-finite entries")
    return matrix


def row_norms(m: Matrix) -> np.ndarray:
    """Euclidean norm of every row."""
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def l2_normalize_rows(m: Matrix) -> Matrix:
    """Scale every row of `m` to unit Euclidean norm.

    Raises:
        ZeroRow: if any row has a norm below 1e-30.
    """
    m = np.asarray(m, dtype=np.float64)
    norms = row_norms(m)
    small = np.flatnonzero(norms < ZERO_NORM)
    if small.size:
        raise ZeroRow(int(small[0]), float(norms[small[0]]))
    return m / norms[:, None]


def similarity_matrix(a: Matrix, b: Matrix) -> Matrix:
    """Cosine similarity between the rows of two row-normalized matrices.

    `output[i][j] = dot(a_i, b_j)`; because the rows are expected to be unit
    vectors this is the cosine similarity.

    Raises:
        DimensionMismatch: if the column counts differ.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"Cannot compare rows of shape {a.shape} with rows of shape {b.shape}")
    return a @ b.T


def top_k_desc(values: Sequence[float], mask: Sequence[bool], k: int) -> np.ndarray:
    """Indices of the `k` largest unmasked values, largest first.

    Only entries whose mask is True are candidates. Ties are broken by the
    lower index, so the selection is fully deterministic.

    Args:
        values: Scores to rank.
        mask: True for every candidate entry.
        k: Number of indices requested; fewer are returned when there are
            fewer candidates.

    Raises:
        ShapeMismatch: if values and mask differ in length.
        EmptySelection: if every entry is masked.

    Returns:
        np.ndarray: `min(k, #candidates)` integer indices.
    """
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if values.shape != mask.shape:
        raise ShapeMismatch("Values and mask must have the same length", expected=values.shape, got=mask.shape)
    candidates = np.flatnonzero(mask)
    if candidates.size == 0:
        raise EmptySelection("Every entry is masked, nothing to select")
    # stable sort on the negated values keeps lower indices first among ties
    order = np.argsort(-values[candidates], kind="stable")
    return candidates[order[: max(0, min(k, candidates.size))]]
