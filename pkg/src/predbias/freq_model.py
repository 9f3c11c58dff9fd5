"""Count-based predicate model: Pr(predicate | subject label, object label).

The model tallies how often each predicate annotates a (subject label,
object label) pair and predicts the additively smoothed conditional
distribution. It is the workhorse predictor for the prior-only regime where
ground-truth boxes and object labels are given and only the predicate is
predicted.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .artifacts import read_artifact, write_artifact
from .dataset import Dataset, Vocabulary
from .errors import ArtifactError, ConfigError, DatasetError
from .validation import as_index_vector, as_label_pairs, check_vocabulary_digest


class FrequencyModel(BaseEstimator):
    """Smoothed conditional frequency estimator over label pairs.

    Parameters
    ----------
    epsilon : additive smoothing mass per predicate. With a seen pair the
        predicted distribution is (count + epsilon) / (pair_total + epsilon*K);
        an unseen pair yields the uniform distribution even at epsilon = 0.
    n_predicates : number of predicate classes. Inferred from ``y`` when
        omitted; always set explicitly when tail classes may be absent.
    """

    def __init__(self, epsilon: float = 1.0, n_predicates: int | None = None):
        self.epsilon = epsilon
        self.n_predicates = n_predicates

    def fit(self, X, y) -> "FrequencyModel":
        """Tally counts from (n, 2) label pairs and (n,) predicate indices."""
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        X = as_label_pairs(X)
        y = as_index_vector(y, "predicate indices")
        if X.shape[0] != y.shape[0]:
            raise DatasetError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[0] == 0:
            raise DatasetError("cannot fit a frequency model on zero triplets")
        if self.n_predicates is None:
            k = int(y.max()) + 1
        else:
            k = int(self.n_predicates)
            if int(y.max()) >= k:
                raise DatasetError(f"predicate index {int(y.max())} out of range for K={k}")
        counts: dict[tuple[int, int], np.ndarray] = {}
        for (m, n), pred in zip(map(tuple, X.tolist()), y.tolist()):
            cell = counts.get((m, n))
            if cell is None:
                cell = np.zeros(k, dtype=np.int64)
                counts[(m, n)] = cell
            cell[pred] += 1
        self.counts_ = counts
        self.n_predicates_ = k
        self.n_samples_ = int(X.shape[0])
        self.vocabulary_: Vocabulary | None = getattr(self, "vocabulary_", None)
        return self

    @classmethod
    def from_dataset(cls, ds: Dataset, epsilon: float = 1.0) -> "FrequencyModel":
        """Fit from a dataset's triplets, binding the model to its vocabulary."""
        pairs = []
        preds = []
        for image, t in ds.iter_triplets():
            labels = image.label_by_id
            pairs.append((labels[t.subject_id], labels[t.object_id]))
            preds.append(t.predicate_index)
        model = cls(epsilon=epsilon, n_predicates=ds.vocabulary.num_predicates)
        model.vocabulary_ = ds.vocabulary
        return model.fit(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), np.asarray(preds, dtype=np.int64))

    def _check_fitted(self) -> None:
        if not hasattr(self, "counts_"):
            raise DatasetError("FrequencyModel is not fitted")

    def score_pair(self, subject_label: int, object_label: int) -> np.ndarray:
        """Predicted distribution for one label pair. Sums to 1."""
        self._check_fitted()
        cell = self.counts_.get((int(subject_label), int(object_label)))
        k = self.n_predicates_
        if cell is None:
            return np.full(k, 1.0 / k)
        total = int(cell.sum())
        denom = total + self.epsilon * k
        if denom == 0.0:
            return np.full(k, 1.0 / k)
        return (cell + self.epsilon) / denom

    def predict_proba(self, X) -> np.ndarray:
        X = as_label_pairs(X)
        out = np.empty((X.shape[0], self.n_predicates_), dtype=np.float64)
        for i, (m, n) in enumerate(X.tolist()):
            out[i] = self.score_pair(m, n)
        return out

    def predict(self, X) -> np.ndarray:
        """Most likely predicate per pair; ties resolve to the lowest index."""
        return np.argmax(self.predict_proba(X), axis=1)

    def predicate_marginal(self) -> np.ndarray:
        """Training-domain predicate counts stored in the model."""
        self._check_fitted()
        totals = np.zeros(self.n_predicates_, dtype=np.int64)
        for cell in self.counts_.values():
            totals += cell
        return totals


def save_model(model: FrequencyModel, path: str | Path, provenance: dict | None = None) -> None:
    model._check_fitted()
    if model.vocabulary_ is None:
        raise ArtifactError("model has no bound vocabulary; fit it with from_dataset or load_model")
    vocab = model.vocabulary_
    entries = []
    for (m, n), cell in model.counts_.items():
        entries.append(
            {
                "subj": vocab.object_labels[m],
                "obj": vocab.object_labels[n],
                "counts": [int(v) for v in cell],
            }
        )
    entries.sort(key=lambda e: (e["subj"], e["obj"]))
    doc = {
        "kind": "frequency_model",
        "epsilon": model.epsilon,
        "vocabulary_digest": vocab.digest(),
        "entries": entries,
        "provenance": provenance or {},
    }
    write_artifact(path, doc)


def load_model(path: str | Path, vocab: Vocabulary) -> FrequencyModel:
    doc = read_artifact(path)
    if doc.get("kind") != "frequency_model":
        raise ArtifactError(f"{path} is not a frequency model artifact")
    check_vocabulary_digest(doc.get("vocabulary_digest", ""), vocab.digest(), f"model {path}")
    k = vocab.num_predicates
    model = FrequencyModel(epsilon=float(doc["epsilon"]), n_predicates=k)
    counts: dict[tuple[int, int], np.ndarray] = {}
    total = 0
    for entry in doc["entries"]:
        key = (vocab.object_index(entry["subj"]), vocab.object_index(entry["obj"]))
        cell = np.asarray(entry["counts"], dtype=np.int64)
        if cell.shape != (k,) or (cell < 0).any():
            raise ArtifactError(f"model {path}: malformed count row for {entry['subj']}/{entry['obj']}")
        if key in counts:
            raise ArtifactError(f"model {path}: duplicate pair entry {entry['subj']}/{entry['obj']}")
        counts[key] = cell
        total += int(cell.sum())
    model.counts_ = counts
    model.n_predicates_ = k
    model.n_samples_ = total
    model.vocabulary_ = vocab
    return model
