"""Transition matrices for semantic debiasing and their application.

A biased model systematically answers a common predicate where an informative
one was annotated. The transition matrix T estimates, for each restored label
l, how much of the biased mass at label h really belongs to l; debiasing is
the matrix-vector product T @ p followed by renormalization. Four builders
are provided: row-normalized confusion (cm), transposed column-normalized
confusion (ccm), raw subject-object context overlap (soo), and overlap masked
to the informative-row by common-column block (sobg).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .artifacts import read_artifact, write_artifact
from .balance import PredicatePartition
from .dataset import Dataset, Vocabulary
from .errors import ArtifactError, ConfigError, PredbiasError
from .freq_model import FrequencyModel
from .validation import as_distribution, as_nonnegative_square, check_vocabulary_digest

TRANSITION_SOURCES = ("cm", "ccm", "soo", "sobg")

ROW_SUM_BUILD_TOL = 1e-9
ROW_SUM_LOAD_TOL = 1e-6


def _check_integer_square(cells: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(cells)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"{what} must be square, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ConfigError(f"{what} must hold integer counts, got dtype {arr.dtype}")
    if (arr < 0).any():
        raise ConfigError(f"{what} must be non-negative")
    out = arr.astype(np.int64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts of (annotated row, predicted column) over evaluated triplets."""

    cells: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", _check_integer_square(self.cells, "confusion matrix"))

    @property
    def num_predicates(self) -> int:
        return self.cells.shape[0]

    @property
    def total(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True)
class OverlapMatrix:
    """Counts of shared subject-object label contexts per predicate pair."""

    cells: np.ndarray

    def __post_init__(self) -> None:
        cells = _check_integer_square(self.cells, "overlap matrix")
        if (cells != cells.T).any():
            raise ConfigError("overlap matrix must be symmetric")
        object.__setattr__(self, "cells", cells)

    @property
    def num_predicates(self) -> int:
        return self.cells.shape[0]


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic map from biased scores to restored scores.

    Rows index the restored label, columns the biased label. Frozen after
    construction; the cell buffer is read-only so concurrent evaluation
    workers can share one instance.
    """

    cells: np.ndarray
    alpha: float
    source: str

    def __post_init__(self) -> None:
        cells = as_nonnegative_square(self.cells, "transition matrix")
        if self.source not in TRANSITION_SOURCES:
            raise ConfigError(
                f"transition source must be one of {TRANSITION_SOURCES}, got {self.source!r}"
            )
        if self.alpha < 0 or not np.isfinite(self.alpha):
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha}")
        if (cells > 1.0 + 1e-12).any():
            raise ConfigError("transition cells must lie in [0, 1]")
        sums = cells.sum(axis=1)
        worst = float(np.abs(sums - 1.0).max())
        if worst > ROW_SUM_BUILD_TOL:
            raise ConfigError(f"transition rows must sum to 1, worst deviation {worst:.3e}")
        cells = cells.copy()
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    @property
    def num_predicates(self) -> int:
        return self.cells.shape[0]


def _float_cells(mat) -> np.ndarray:
    if isinstance(mat, (ConfusionMatrix, OverlapMatrix)):
        return mat.cells.astype(np.float64)
    return as_nonnegative_square(mat, "matrix").astype(np.float64)


def row_normalize(mat) -> np.ndarray:
    """Scale each row to sum 1; an all-zero row becomes the uniform row."""
    cells = _float_cells(mat)
    k = cells.shape[0]
    sums = cells.sum(axis=1, keepdims=True)
    out = np.full((k, k), 1.0 / k, dtype=np.float64)
    nz = sums[:, 0] > 0
    out[nz] = cells[nz] / sums[nz]
    return out


def column_normalize_transpose(mat) -> np.ndarray:
    """Scale each column to sum 1, then transpose; zero columns become uniform."""
    cells = _float_cells(mat)
    k = cells.shape[0]
    sums = cells.sum(axis=0, keepdims=True)
    out = np.full((k, k), 1.0 / k, dtype=np.float64)
    nz = sums[0] > 0
    out[:, nz] = cells[:, nz] / sums[:, nz]
    return np.ascontiguousarray(out.T)


def smooth_and_normalize(mat, alpha: float, source: str) -> TransitionMatrix:
    """Add alpha to the diagonal and row-normalize the result.

    Large alpha pulls the matrix toward the identity, so alpha interpolates
    between the raw relation estimate and no debiasing at all.
    """
    cells = _float_cells(mat)
    if alpha < 0 or not np.isfinite(alpha):
        raise ConfigError(f"alpha must be finite and >= 0, got {alpha}")
    smoothed = cells + alpha * np.eye(cells.shape[0], dtype=np.float64)
    return TransitionMatrix(cells=row_normalize(smoothed), alpha=float(alpha), source=source)


def build_confusion(model: FrequencyModel, ds: Dataset) -> ConfusionMatrix:
    """Tally annotated-vs-predicted predicate pairs over every triplet in ds.

    The model's argmax depends only on the subject/object labels, so each
    distinct label pair is scored once and reused.
    """
    model._check_fitted()
    if model.vocabulary_ is not None:
        check_vocabulary_digest(
            model.vocabulary_.digest(), ds.vocabulary.digest(), "confusion model"
        )
    k = model.n_predicates_
    if k != ds.vocabulary.num_predicates:
        raise ConfigError(
            f"model scores {k} predicates but the vocabulary has {ds.vocabulary.num_predicates}"
        )
    cells = np.zeros((k, k), dtype=np.int64)
    cache: dict[tuple[int, int], int] = {}
    for image in ds.images:
        labels = image.label_by_id
        for t in image.triplets:
            pair = (labels[t.subject_id], labels[t.object_id])
            predicted = cache.get(pair)
            if predicted is None:
                predicted = int(np.argmax(model.score_pair(*pair)))
                cache[pair] = predicted
            cells[t.predicate_index, predicted] += 1
    return ConfusionMatrix(cells=cells)


def build_overlap(ds: Dataset) -> OverlapMatrix:
    """Count shared contexts: cell [k][l] is how many distinct subject-object
    label pairs carry both predicate k and predicate l somewhere in ds.

    Context membership is binary; annotating the same triplet twice in
    different images does not increase the overlap.
    """
    k = ds.vocabulary.num_predicates
    contexts: dict[tuple[int, int], set[int]] = {}
    for image in ds.images:
        labels = image.label_by_id
        for t in image.triplets:
            pair = (labels[t.subject_id], labels[t.object_id])
            contexts.setdefault(pair, set()).add(t.predicate_index)
    cells = np.zeros((k, k), dtype=np.int64)
    for preds in contexts.values():
        members = sorted(preds)
        for a in members:
            for b in members:
                cells[a, b] += 1
    return OverlapMatrix(cells=cells)


def mask_bipartite(om: OverlapMatrix, partition: PredicatePartition) -> np.ndarray:
    """Zero every cell outside the informative-row by common-column block."""
    if partition.num_predicates != om.num_predicates:
        raise ConfigError("partition size does not match the overlap matrix")
    cells = om.cells.astype(np.float64)
    masked = np.zeros_like(cells)
    rows = np.asarray(partition.informative, dtype=np.intp)
    cols = np.asarray(partition.common, dtype=np.intp)
    masked[np.ix_(rows, cols)] = cells[np.ix_(rows, cols)]
    return masked


def build_transition_matrix(
    source: str,
    alpha: float,
    confusion: ConfusionMatrix | None = None,
    overlap: OverlapMatrix | None = None,
    partition: PredicatePartition | None = None,
) -> TransitionMatrix:
    """Dispatch to the named construction route.

    cm and ccm consume a confusion matrix, soo the raw overlap, sobg the
    overlap masked by a partition; every route ends in the same diagonal
    smoothing and row normalization.
    """
    if source not in TRANSITION_SOURCES:
        raise ConfigError(
            f"transition source must be one of {TRANSITION_SOURCES}, got {source!r}"
        )
    if source in ("cm", "ccm"):
        if confusion is None:
            raise ConfigError(f"transition source {source!r} needs a confusion matrix")
        base = row_normalize(confusion) if source == "cm" else column_normalize_transpose(confusion)
    else:
        if overlap is None:
            raise ConfigError(f"transition source {source!r} needs an overlap matrix")
        if source == "sobg":
            if partition is None:
                raise ConfigError("transition source 'sobg' needs a predicate partition")
            base = mask_bipartite(overlap, partition)
        else:
            base = overlap.cells
    return smooth_and_normalize(base, alpha, source)


def apply_debias(tm: TransitionMatrix, biased) -> np.ndarray:
    """Restore one score distribution: out[l] = sum_h T[l][h] * biased[h], renormalized."""
    vec = as_distribution(biased, tm.num_predicates)
    raw = tm.cells @ vec
    total = float(raw.sum())
    if total <= 0.0:
        return np.full(tm.num_predicates, 1.0 / tm.num_predicates)
    return raw / total


def debias_scores(tm: TransitionMatrix, scores) -> np.ndarray:
    """Vectorized apply_debias over rows of an (n, K) score matrix."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim == 1:
        return apply_debias(tm, arr)
    if arr.ndim != 2 or arr.shape[1] != tm.num_predicates:
        raise ConfigError(
            f"scores must be (n, {tm.num_predicates}), got shape {arr.shape}"
        )
    if not np.isfinite(arr).all() or (arr < 0).any():
        raise ConfigError("scores must be finite and non-negative")
    raw = arr @ tm.cells.T
    totals = raw.sum(axis=1, keepdims=True)
    out = np.full_like(raw, 1.0 / tm.num_predicates)
    nz = totals[:, 0] > 0
    out[nz] = raw[nz] / totals[nz]
    return out


class SemanticDebiaser(BaseEstimator):
    """Estimator wrapper: fit builds a transition matrix from a training
    dataset, transform pushes biased score rows through it.

    cm and ccm need ``model`` (the biased scorer whose mistakes define the
    confusion); sobg needs ``partition``; soo needs neither.
    """

    def __init__(
        self,
        source: str = "sobg",
        alpha: float = 1.0,
        model: FrequencyModel | None = None,
        partition: PredicatePartition | None = None,
    ):
        self.source = source
        self.alpha = alpha
        self.model = model
        self.partition = partition

    def fit(self, ds: Dataset, y=None) -> "SemanticDebiaser":
        if self.source in ("cm", "ccm"):
            if self.model is None:
                raise ConfigError(f"source {self.source!r} needs a fitted biased model")
            confusion = build_confusion(self.model, ds)
            self.transition_ = build_transition_matrix(self.source, self.alpha, confusion=confusion)
        else:
            overlap = build_overlap(ds)
            self.transition_ = build_transition_matrix(
                self.source, self.alpha, overlap=overlap, partition=self.partition
            )
        return self

    def transform(self, scores) -> np.ndarray:
        if not hasattr(self, "transition_"):
            raise ConfigError("SemanticDebiaser is not fitted; call fit first")
        return debias_scores(self.transition_, scores)


def _save_count_matrix(kind: str, cells: np.ndarray, vocab: Vocabulary, path, provenance) -> None:
    doc = {
        "kind": kind,
        "predicate_labels": list(vocab.predicate_labels),
        "vocabulary_digest": vocab.digest(),
        "rows": [[int(v) for v in row] for row in cells],
        "provenance": provenance or {},
    }
    write_artifact(path, doc)


def _load_count_matrix(kind: str, path, vocab: Vocabulary) -> np.ndarray:
    doc = read_artifact(path)
    if doc.get("kind") != kind:
        raise ArtifactError(f"{path} is not a {kind} artifact")
    check_vocabulary_digest(doc.get("vocabulary_digest", ""), vocab.digest(), f"{kind} {path}")
    if doc.get("predicate_labels") != list(vocab.predicate_labels):
        raise ArtifactError(f"{kind} {path} predicate labels do not match the vocabulary")
    rows = doc["rows"]
    k = vocab.num_predicates
    if len(rows) != k or any(len(r) != k for r in rows):
        raise ArtifactError(f"{kind} {path} must hold a {k}x{k} matrix")
    try:
        return np.asarray(rows, dtype=np.int64)
    except (TypeError, ValueError, OverflowError) as exc:
        raise ArtifactError(f"{kind} {path} holds non-integer cells: {exc}") from exc


def save_confusion(cm: ConfusionMatrix, vocab: Vocabulary, path: str | Path,
                   provenance: dict | None = None) -> None:
    _save_count_matrix("confusion", cm.cells, vocab, path, provenance)


def load_confusion(path: str | Path, vocab: Vocabulary) -> ConfusionMatrix:
    try:
        return ConfusionMatrix(cells=_load_count_matrix("confusion", path, vocab))
    except ConfigError as exc:
        raise ArtifactError(f"invalid confusion matrix in {path}: {exc}") from exc


def save_overlap(om: OverlapMatrix, vocab: Vocabulary, path: str | Path,
                 provenance: dict | None = None) -> None:
    _save_count_matrix("overlap", om.cells, vocab, path, provenance)


def load_overlap(path: str | Path, vocab: Vocabulary) -> OverlapMatrix:
    try:
        return OverlapMatrix(cells=_load_count_matrix("overlap", path, vocab))
    except ConfigError as exc:
        raise ArtifactError(f"invalid overlap matrix in {path}: {exc}") from exc


def save_transition(tm: TransitionMatrix, vocab: Vocabulary, path: str | Path,
                    provenance: dict | None = None) -> None:
    if tm.num_predicates != vocab.num_predicates:
        raise ArtifactError("transition matrix size does not match the vocabulary")
    doc = {
        "kind": "transition",
        "source": tm.source,
        "alpha": tm.alpha,
        "predicate_labels": list(vocab.predicate_labels),
        "vocabulary_digest": vocab.digest(),
        "rows": [[float(v) for v in row] for row in tm.cells],
        "provenance": provenance or {},
    }
    write_artifact(path, doc)


def load_transition(path: str | Path, vocab: Vocabulary) -> TransitionMatrix:
    doc = read_artifact(path)
    if doc.get("kind") != "transition":
        raise ArtifactError(f"{path} is not a transition artifact")
    check_vocabulary_digest(doc.get("vocabulary_digest", ""), vocab.digest(), f"transition {path}")
    if doc.get("predicate_labels") != list(vocab.predicate_labels):
        raise ArtifactError(f"transition {path} predicate labels do not match the vocabulary")
    cells = np.asarray(doc["rows"], dtype=np.float64)
    k = vocab.num_predicates
    if cells.shape != (k, k):
        raise ArtifactError(f"transition {path} must hold a {k}x{k} matrix")
    sums = cells.sum(axis=1)
    worst = float(np.abs(sums - 1.0).max())
    if worst > ROW_SUM_LOAD_TOL:
        raise ArtifactError(
            f"transition {path} rows must sum to 1 within {ROW_SUM_LOAD_TOL}, "
            f"worst deviation {worst:.3e}"
        )
    cells = cells / sums[:, None]
    try:
        return TransitionMatrix(cells=cells, alpha=float(doc["alpha"]), source=str(doc["source"]))
    except PredbiasError as exc:
        raise ArtifactError(f"invalid transition matrix in {path}: {exc}") from exc
