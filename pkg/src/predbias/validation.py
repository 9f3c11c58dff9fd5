"""Input validation helpers for array-facing estimator APIs."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DatasetError, VocabularyMismatchError


def as_label_pairs(X) -> np.ndarray:
    """Coerce to an (n, 2) int64 array of (subject_label, object_label) indices."""
    arr = np.asarray(X)
    if arr.ndim == 1 and arr.shape[0] == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DatasetError(f"expected label pairs of shape (n, 2), got {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DatasetError("label pairs must be integers")
    arr = arr.astype(np.int64, copy=False)
    if arr.size and arr.min() < 0:
        raise DatasetError("label indices must be non-negative")
    return arr


def as_index_vector(y, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DatasetError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DatasetError(f"{name} must contain integers")
    arr = arr.astype(np.int64, copy=False)
    if arr.size and arr.min() < 0:
        raise DatasetError(f"{name} indices must be non-negative")
    return arr


def as_nonnegative_square(mat, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DatasetError(f"{name} must be square, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DatasetError(f"{name} contains non-finite values")
    if (arr < 0).any():
        raise DatasetError(f"{name} contains negative values")
    return arr


def as_distribution(scores, k: int | None = None, tol: float = 1e-6) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1:
        raise DatasetError(f"score distribution must be one-dimensional, got shape {arr.shape}")
    if k is not None and arr.shape[0] != k:
        raise DatasetError(f"score distribution has length {arr.shape[0]}, expected {k}")
    if (arr < 0).any() or not np.isfinite(arr).all():
        raise DatasetError("score distribution must be finite and non-negative")
    if abs(float(arr.sum()) - 1.0) > tol:
        raise DatasetError(f"score distribution sums to {arr.sum()!r}, expected 1 within {tol}")
    return arr


def check_rows_stochastic(cells: np.ndarray, tol: float = 1e-6, name: str = "transition") -> None:
    sums = cells.sum(axis=1)
    worst = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
    if worst > tol:
        raise DatasetError(f"{name} rows must sum to 1 within {tol}; worst deviation {worst:g}")


def check_vocabulary_digest(expected: str, actual: str, what: str) -> None:
    if expected != actual:
        raise VocabularyMismatchError(
            f"{what} was built against a different vocabulary "
            f"(expected {expected}, got {actual})"
        )


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return value
