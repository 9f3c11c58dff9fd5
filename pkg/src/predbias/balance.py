"""Information content, common/informative partition, and balanced undersampling.

Rare predicates carry more information than frequent ones. The information
content of predicate z with marginal probability p(z) is -log_b p(z); sorting
by it splits the predicate set into the M lowest-information "common"
predicates and the informative rest. Balancing then caps each common
predicate at a per-predicate budget while conserving every informative
triplet, either by uniform random removal or by dropping the most confidently
predicted (least ambiguous to lose) samples last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .artifacts import read_artifact, write_artifact
from .dataset import Dataset, ImageRecord, Vocabulary, predicate_counts
from .errors import ArtifactError, ConfigError, DatasetError
from .freq_model import FrequencyModel
from .validation import check_vocabulary_digest

STRATEGIES = ("blru", "blra")


@dataclass(frozen=True)
class InformationContentTable:
    """Per-predicate marginal frequency and information content.

    ``flagged`` lists predicate indices whose frequency was zero or missing;
    they carry the finite ceiling value -log_b(1/(total + K)) so downstream
    partitions stay well-defined.
    """

    frequencies: tuple[float, ...]
    ic: tuple[float, ...]
    base: float
    source: str
    flagged: tuple[int, ...] = ()

    @property
    def num_predicates(self) -> int:
        return len(self.ic)


def _log_base(values: np.ndarray, base: float) -> np.ndarray:
    if base == 2.0:
        return np.log2(values)
    if base == 10.0:
        return np.log10(values)
    return np.log(values) / math.log(base)


def compute_ic(
    frequencies,
    base: float = 2.0,
    total_count: int | None = None,
    source: str = "dataset",
) -> InformationContentTable:
    """Information content -log_b(freq) per predicate.

    Zero frequencies get the ceiling -log_b(1/(total_count + K)), which is
    finite and larger than any observed value; they require ``total_count``.
    """
    freqs = np.asarray(frequencies, dtype=np.float64)
    if freqs.ndim != 1 or freqs.shape[0] < 2:
        raise ConfigError(f"need a 1-d frequency vector of length >= 2, got shape {freqs.shape}")
    if base <= 1.0 or not math.isfinite(base):
        raise ConfigError(f"information content base must be > 1, got {base}")
    if (freqs < 0).any() or not np.isfinite(freqs).all():
        raise ConfigError("frequencies must be finite and non-negative")
    if abs(float(freqs.sum()) - 1.0) > 1e-6:
        raise ConfigError(f"frequencies must sum to 1, got {float(freqs.sum())!r}")
    zero = freqs == 0.0
    ic = np.empty_like(freqs)
    if (~zero).any():
        ic[~zero] = -_log_base(freqs[~zero], base)
    if zero.any():
        if total_count is None:
            raise ConfigError("zero frequencies need total_count for the information ceiling")
        ceiling = -_log_base(np.asarray([1.0 / (total_count + freqs.shape[0])]), base)[0]
        ic[zero] = ceiling
    return InformationContentTable(
        frequencies=tuple(float(v) for v in freqs),
        ic=tuple(float(v) for v in ic),
        base=float(base),
        source=source,
        flagged=tuple(int(i) for i in np.flatnonzero(zero)),
    )


def ic_from_dataset(ds: Dataset, base: float = 2.0) -> InformationContentTable:
    counts = predicate_counts(ds)
    total = int(counts.sum())
    if total == 0:
        raise DatasetError("cannot compute information content of an empty dataset")
    return compute_ic(counts / total, base=base, total_count=total, source="dataset")


def ic_from_counts(counts, base: float = 2.0, source: str = "dataset") -> InformationContentTable:
    arr = np.asarray(counts, dtype=np.float64)
    total = float(arr.sum())
    if total <= 0:
        raise ConfigError("counts must sum to a positive total")
    return compute_ic(arr / total, base=base, total_count=int(round(total)), source=source)


def load_external_ic(path: str | Path, vocab: Vocabulary, base: float = 2.0) -> InformationContentTable:
    """Build an IC table from an external {predicate label: count} document.

    Counts are normalized over the matched predicates; predicates missing
    from the file get the zero-frequency ceiling and are flagged.
    """
    doc = read_artifact(path)
    if not isinstance(doc, dict):
        raise ArtifactError(f"external counts file {path} must be a JSON object")
    counts = np.zeros(vocab.num_predicates, dtype=np.float64)
    matched = 0
    for label, value in doc.items():
        if label not in vocab.predicate_labels:
            continue
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
            raise ArtifactError(f"external count for {label!r} must be a non-negative number")
        counts[vocab.predicate_index(label)] = float(value)
        matched += 1
    if matched == 0:
        raise ArtifactError(f"no predicate in {path} matches the vocabulary")
    total = float(counts.sum())
    if total <= 0:
        raise ArtifactError(f"external counts in {path} are all zero")
    table = compute_ic(counts / total, base=base, total_count=int(round(total)), source="external")
    return table


@dataclass(frozen=True)
class PredicatePartition:
    """Split of predicate indices into common (low IC) and informative (the rest)."""

    num_predicates: int
    common: tuple[int, ...]

    def __post_init__(self) -> None:
        common = tuple(sorted(set(int(v) for v in self.common)))
        object.__setattr__(self, "common", common)
        if not common:
            raise ConfigError("partition needs at least one common predicate")
        if len(common) >= self.num_predicates:
            raise ConfigError("partition needs at least one informative predicate")
        if common[0] < 0 or common[-1] >= self.num_predicates:
            raise ConfigError("common predicate index out of range")

    @property
    def informative(self) -> tuple[int, ...]:
        common = set(self.common)
        return tuple(k for k in range(self.num_predicates) if k not in common)

    def is_common(self, k: int) -> bool:
        return k in set(self.common)

    @property
    def m(self) -> int:
        return len(self.common)


def partition_predicates(table: InformationContentTable, m: int) -> PredicatePartition:
    """Take the m lowest-IC predicates as common.

    Ties resolve toward higher raw frequency, then lower index, so the split
    is deterministic and invariant under strictly monotone IC transforms.
    """
    k = table.num_predicates
    if not (0 < m < k):
        raise ConfigError(f"m must be strictly between 0 and {k}, got {m}")
    order = sorted(range(k), key=lambda i: (table.ic[i], -table.frequencies[i], i))
    return PredicatePartition(num_predicates=k, common=tuple(sorted(order[:m])))


@dataclass(frozen=True)
class AdjustedDomain:
    """A rebalanced dataset plus the bookkeeping of what was kept and dropped."""

    dataset: Dataset
    strategy: str
    n_per_common: int
    seed: int | None
    partition: PredicatePartition
    kept_counts: tuple[int, ...]
    dropped_counts: tuple[int, ...]

    def provenance(self) -> dict:
        vocab = self.dataset.vocabulary
        return {
            "strategy": self.strategy,
            "n_per_common": self.n_per_common,
            "seed": self.seed,
            "common_predicates": [vocab.predicate_labels[i] for i in self.partition.common],
            "kept_counts": {
                vocab.predicate_labels[i]: int(v) for i, v in enumerate(self.kept_counts)
            },
            "dropped_counts": {
                vocab.predicate_labels[i]: int(v) for i, v in enumerate(self.dropped_counts)
            },
        }


def _triplet_key(ds: Dataset, image_pos: int, t) -> tuple[str, int, int]:
    return (ds.images[image_pos].image_id, t.subject_id, t.object_id)


def _collect_by_predicate(ds: Dataset) -> dict[int, list[tuple[int, object]]]:
    """Per predicate: (image position, triplet) sorted by the stable key."""
    by_pred: dict[int, list[tuple[int, object]]] = {}
    for pos, image in enumerate(ds.images):
        for t in image.triplets:
            by_pred.setdefault(t.predicate_index, []).append((pos, t))
    for k in by_pred:
        by_pred[k].sort(key=lambda item: _triplet_key(ds, item[0], item[1]))
    return by_pred


def _rebuild(ds: Dataset, keep: set[tuple[int, int, int]]) -> Dataset:
    """Filter triplets by identity, preserving image order and empty images."""
    images = []
    for pos, image in enumerate(ds.images):
        kept = tuple(t for t in image.triplets if (pos, t.subject_id, t.object_id) in keep)
        images.append(ImageRecord(image.image_id, image.objects, kept))
    return Dataset(ds.vocabulary, tuple(images), "adjusted")


def _finish(
    ds: Dataset,
    partition: PredicatePartition,
    n: int,
    seed: int | None,
    strategy: str,
    by_pred: dict[int, list[tuple[int, object]]],
    kept_per_pred: dict[int, list[tuple[int, object]]],
) -> AdjustedDomain:
    k = ds.vocabulary.num_predicates
    keep: set[tuple[int, int, int]] = set()
    kept_counts = [0] * k
    dropped_counts = [0] * k
    for pred, items in by_pred.items():
        kept = kept_per_pred.get(pred, items)
        kept_counts[pred] = len(kept)
        dropped_counts[pred] = len(items) - len(kept)
        for pos, t in kept:
            keep.add((pos, t.subject_id, t.object_id))
    return AdjustedDomain(
        dataset=_rebuild(ds, keep),
        strategy=strategy,
        n_per_common=n,
        seed=seed,
        partition=partition,
        kept_counts=tuple(kept_counts),
        dropped_counts=tuple(dropped_counts),
    )


def random_undersample(
    ds: Dataset, partition: PredicatePartition, n_per_common: int, seed: int
) -> AdjustedDomain:
    """Keep a uniform random subset of exactly N triplets per oversized common predicate.

    Every informative triplet is conserved. Selection permutes the stable-key
    sorted triplet list of each common predicate with an independent PCG64
    stream derived from (seed, predicate index), so results are bit-identical
    across platforms and independent of predicate processing order.
    """
    if n_per_common < 1:
        raise ConfigError(f"n_per_common must be >= 1, got {n_per_common}")
    if partition.num_predicates != ds.vocabulary.num_predicates:
        raise ConfigError("partition size does not match the vocabulary")
    by_pred = _collect_by_predicate(ds)
    kept_per_pred: dict[int, list[tuple[int, object]]] = {}
    for pred in partition.common:
        items = by_pred.get(pred, [])
        if len(items) > n_per_common:
            rng = np.random.default_rng([seed, pred])
            chosen = rng.permutation(len(items))[:n_per_common]
            kept_per_pred[pred] = [items[i] for i in sorted(int(v) for v in chosen)]
        elif items:
            kept_per_pred[pred] = items
    return _finish(ds, partition, n_per_common, seed, "blru", by_pred, kept_per_pred)


def confidence_undersample(
    ds: Dataset, partition: PredicatePartition, n_per_common: int, model: FrequencyModel
) -> AdjustedDomain:
    """Keep the N most confidently predicted triplets per oversized common predicate.

    Confidence is the model's probability of the annotated predicate given the
    subject/object labels; low-confidence samples are the ambiguous ones and
    are dropped first. Ties break on the stable key, so the result does not
    depend on input order and needs no randomness.
    """
    if n_per_common < 1:
        raise ConfigError(f"n_per_common must be >= 1, got {n_per_common}")
    if partition.num_predicates != ds.vocabulary.num_predicates:
        raise ConfigError("partition size does not match the vocabulary")
    model._check_fitted()
    if model.vocabulary_ is not None:
        check_vocabulary_digest(model.vocabulary_.digest(), ds.vocabulary.digest(), "scoring model")
    by_pred = _collect_by_predicate(ds)
    cache: dict[tuple[int, int], np.ndarray] = {}
    kept_per_pred: dict[int, list[tuple[int, object]]] = {}
    for pred in partition.common:
        items = by_pred.get(pred, [])
        if len(items) <= n_per_common:
            if items:
                kept_per_pred[pred] = items
            continue
        scored = []
        for pos, t in items:
            labels = ds.images[pos].label_by_id
            pair = (labels[t.subject_id], labels[t.object_id])
            dist = cache.get(pair)
            if dist is None:
                dist = model.score_pair(*pair)
                cache[pair] = dist
            scored.append((-float(dist[pred]), _triplet_key(ds, pos, t), (pos, t)))
        scored.sort(key=lambda row: (row[0], row[1]))
        top = [row[2] for row in scored[:n_per_common]]
        top.sort(key=lambda item: _triplet_key(ds, item[0], item[1]))
        kept_per_pred[pred] = top
    return _finish(ds, partition, n_per_common, None, "blra", by_pred, kept_per_pred)


class BalancedUndersampler(BaseEstimator):
    """Estimator-style wrapper over the two undersampling strategies.

    strategy "blru" removes uniformly at random (needs ``seed``); "blra"
    removes the least confident samples first (needs a fitted ``model``).
    """

    def __init__(
        self,
        strategy: str = "blru",
        partition: PredicatePartition | None = None,
        n_per_common: int = 2000,
        seed: int = 0,
        model: FrequencyModel | None = None,
    ):
        self.strategy = strategy
        self.partition = partition
        self.n_per_common = n_per_common
        self.seed = seed
        self.model = model

    def fit_resample(self, ds: Dataset) -> AdjustedDomain:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.partition is None:
            raise ConfigError("BalancedUndersampler needs a partition")
        if self.strategy == "blru":
            result = random_undersample(ds, self.partition, self.n_per_common, self.seed)
        else:
            if self.model is None:
                raise ConfigError("strategy 'blra' needs a fitted model for confidence scores")
            result = confidence_undersample(ds, self.partition, self.n_per_common, self.model)
        self.adjusted_ = result
        return result


def save_ic_table(table: InformationContentTable, vocab: Vocabulary, path: str | Path,
                  provenance: dict | None = None) -> None:
    if table.num_predicates != vocab.num_predicates:
        raise ArtifactError("information table size does not match the vocabulary")
    flagged = set(table.flagged)
    rows = []
    for i, label in enumerate(vocab.predicate_labels):
        row = {"label": label, "frequency": table.frequencies[i], "ic": table.ic[i]}
        if i in flagged:
            row["flags"] = ["zero_frequency"]
        rows.append(row)
    doc = {
        "kind": "information_content",
        "base": table.base,
        "source": table.source,
        "vocabulary_digest": vocab.digest(),
        "rows": rows,
        "provenance": provenance or {},
    }
    write_artifact(path, doc)


def load_ic_table(path: str | Path, vocab: Vocabulary) -> InformationContentTable:
    doc = read_artifact(path)
    if doc.get("kind") != "information_content":
        raise ArtifactError(f"{path} is not an information content artifact")
    check_vocabulary_digest(doc.get("vocabulary_digest", ""), vocab.digest(), f"ic table {path}")
    rows = doc["rows"]
    if [r["label"] for r in rows] != list(vocab.predicate_labels):
        raise ArtifactError(f"ic table {path} rows do not match the vocabulary order")
    return InformationContentTable(
        frequencies=tuple(float(r["frequency"]) for r in rows),
        ic=tuple(float(r["ic"]) for r in rows),
        base=float(doc["base"]),
        source=str(doc["source"]),
        flagged=tuple(i for i, r in enumerate(rows) if "zero_frequency" in r.get("flags", [])),
    )


def save_partition(partition: PredicatePartition, vocab: Vocabulary, path: str | Path,
                   provenance: dict | None = None) -> None:
    doc = {
        "kind": "partition",
        "vocabulary_digest": vocab.digest(),
        "m": partition.m,
        "common": [vocab.predicate_labels[i] for i in partition.common],
        "provenance": provenance or {},
    }
    write_artifact(path, doc)


def load_partition(path: str | Path, vocab: Vocabulary) -> PredicatePartition:
    doc = read_artifact(path)
    if doc.get("kind") != "partition":
        raise ArtifactError(f"{path} is not a partition artifact")
    check_vocabulary_digest(doc.get("vocabulary_digest", ""), vocab.digest(), f"partition {path}")
    common = tuple(vocab.predicate_index(label) for label in doc["common"])
    return PredicatePartition(num_predicates=vocab.num_predicates, common=common)
