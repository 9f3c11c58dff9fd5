"""PredCls evaluation: per-image ranking, recall family, confusion reports.

Ground-truth boxes and object labels are given; only the predicate of each
ordered pair is predicted. Recall@K asks whether the annotated triplets rank
inside each image's top K; mR@K averages recall per predicate so tail
predicates count as much as head ones; mRIC@K further weights each predicate
by its information content.
"""

from __future__ import annotations

import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifacts import write_artifact
from .balance import InformationContentTable
from .dataset import Dataset, ImageRecord
from .debias import TransitionMatrix, apply_debias
from .errors import ConfigError, DatasetError
from .freq_model import FrequencyModel
from .validation import check_vocabulary_digest

DEFAULT_K_VALUES = (20, 50, 100)


@dataclass(frozen=True)
class RankedPrediction:
    """Scored predicate entries for one image, best first.

    Entries are (subject_id, object_id, predicate_index, score) sorted by
    descending score with ties broken on (subject_id, object_id,
    predicate_index), so equal-score orderings are reproducible.
    """

    image_id: str
    entries: tuple[tuple[int, int, int, float], ...]


def _candidate_pairs(image: ImageRecord, all_pairs: bool) -> list[tuple[int, int]]:
    if all_pairs:
        ids = sorted(obj.instance_id for obj in image.objects)
        return [(s, o) for s in ids for o in ids if s != o]
    pairs = {(t.subject_id, t.object_id) for t in image.triplets}
    return sorted(pairs)


def rank_predcls(
    predictor: FrequencyModel,
    tm: TransitionMatrix | None,
    image: ImageRecord,
    all_pairs: bool = False,
    graph_constraint: bool = True,
) -> RankedPrediction:
    """Score every candidate ordered pair of the image and rank the entries.

    Under the graph constraint each pair contributes its single best
    predicate; without it each pair contributes all K scored predicates.
    Candidate pairs default to the annotated ones; ``all_pairs`` widens the
    pool to every ordered pair of distinct instances.
    """
    predictor._check_fitted()
    if tm is not None and tm.num_predicates != predictor.n_predicates_:
        raise ConfigError("transition matrix size does not match the predictor")
    labels = image.label_by_id
    cache: dict[tuple[int, int], np.ndarray] = {}
    entries: list[tuple[int, int, int, float]] = []
    for subj_id, obj_id in _candidate_pairs(image, all_pairs):
        pair = (labels[subj_id], labels[obj_id])
        dist = cache.get(pair)
        if dist is None:
            dist = predictor.score_pair(*pair)
            if tm is not None:
                dist = apply_debias(tm, dist)
            cache[pair] = dist
        if graph_constraint:
            best = int(np.argmax(dist))
            entries.append((subj_id, obj_id, best, float(dist[best])))
        else:
            entries.extend(
                (subj_id, obj_id, k, float(dist[k])) for k in range(dist.shape[0])
            )
    entries.sort(key=lambda e: (-e[3], e[0], e[1], e[2]))
    return RankedPrediction(image_id=image.image_id, entries=tuple(entries))


def recall_at_k(rp: RankedPrediction, gt: ImageRecord, k: int) -> tuple[int, int]:
    """Hits and total for one image: how many annotated triplets appear in the
    top k entries, matched exactly on (subject_id, predicate, object_id)."""
    if rp.image_id != gt.image_id:
        raise DatasetError(
            f"ranking is for image {rp.image_id!r} but ground truth is {gt.image_id!r}"
        )
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    truth = {(t.subject_id, t.predicate_index, t.object_id) for t in gt.triplets}
    hits = sum(1 for s, o, p, _ in rp.entries[:k] if (s, p, o) in truth)
    return hits, len(gt.triplets)


def _image_stats(
    predictor: FrequencyModel,
    tm: TransitionMatrix | None,
    image: ImageRecord,
    k_values: tuple[int, ...],
    all_pairs: bool,
    graph_constraint: bool,
):
    rp = rank_predcls(predictor, tm, image, all_pairs=all_pairs, graph_constraint=graph_constraint)
    truth = {(t.subject_id, t.predicate_index, t.object_id) for t in image.triplets}
    gt_by_pred: dict[int, int] = {}
    for t in image.triplets:
        gt_by_pred[t.predicate_index] = gt_by_pred.get(t.predicate_index, 0) + 1
    hits_at: dict[int, int] = {}
    pred_hits_at: dict[int, dict[int, int]] = {}
    for k in k_values:
        matched = [(s, p, o) for s, o, p, _ in rp.entries[:k] if (s, p, o) in truth]
        hits_at[k] = len(matched)
        per_pred: dict[int, int] = {}
        for _, p, _ in matched:
            per_pred[p] = per_pred.get(p, 0) + 1
        pred_hits_at[k] = per_pred
    return len(image.triplets), gt_by_pred, hits_at, pred_hits_at


def thread_count(threads: int | None = None) -> int:
    """Worker count for evaluation: the explicit argument, else the
    PREDBIAS_THREADS environment variable, else 1 (sequential)."""
    if threads is not None:
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}")
        return threads
    env = os.environ.get("PREDBIAS_THREADS", "").strip()
    if not env:
        return 1
    try:
        value = int(env)
    except ValueError:
        raise ConfigError(f"PREDBIAS_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise ConfigError(f"PREDBIAS_THREADS must be >= 1, got {value}")
    return value


@dataclass
class EvaluationReport:
    """Aggregated metrics for one evaluation run.

    Per-predicate recalls are None for predicates with no ground-truth
    instance in the split; such predicates are excluded from mR and mRIC.
    """

    k_values: tuple[int, ...]
    num_images: int
    num_images_scored: int
    num_triplets: int
    gt_counts: tuple[int, ...]
    r_at_k: dict[int, float]
    mr_at_k: dict[int, float]
    per_predicate_recall: dict[int, tuple[float | None, ...]]
    mric_at_k: dict[str, dict[int, float]] = field(default_factory=dict)
    config: dict = field(default_factory=dict)


def mric_at_k(per_predicate_recalls, table: InformationContentTable) -> float:
    """Mean of recall times information content over predicates with ground truth."""
    recalls = list(per_predicate_recalls)
    if len(recalls) != table.num_predicates:
        raise ConfigError(
            f"recall vector has {len(recalls)} predicates but the ic table has "
            f"{table.num_predicates}"
        )
    present = [(r, table.ic[i]) for i, r in enumerate(recalls) if r is not None]
    if not present:
        raise ConfigError("no predicate has ground truth; mRIC is undefined")
    return float(sum(r * ic for r, ic in present) / len(present))


def evaluate_dataset(
    predictor: FrequencyModel,
    ds: Dataset,
    tm: TransitionMatrix | None = None,
    k_values=DEFAULT_K_VALUES,
    ic_tables: dict[str, InformationContentTable] | None = None,
    all_pairs: bool = False,
    graph_constraint: bool = True,
    threads: int | None = None,
    config: dict | None = None,
) -> EvaluationReport:
    """Evaluate the predictor (optionally debiased by tm) over a test split.

    Images are independent, so they may be scored by a thread pool; the
    reduction is commutative integer addition applied in image order, which
    makes parallel and sequential runs bit-identical.
    """
    predictor._check_fitted()
    if predictor.vocabulary_ is not None:
        check_vocabulary_digest(
            predictor.vocabulary_.digest(), ds.vocabulary.digest(), "evaluation model"
        )
    ks = tuple(sorted(set(int(k) for k in k_values)))
    if not ks or ks[0] < 1:
        raise ConfigError(f"k values must be positive integers, got {list(k_values)}")
    if not ds.images:
        raise DatasetError("cannot evaluate an empty dataset")
    n_preds = ds.vocabulary.num_predicates

    workers = thread_count(threads)
    job = lambda image: _image_stats(predictor, tm, image, ks, all_pairs, graph_constraint)
    if workers == 1 or len(ds.images) < 2:
        stats = [job(image) for image in ds.images]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(job, ds.images))

    recall_fracs: dict[int, list[float]] = {k: [] for k in ks}
    pred_hits: dict[int, np.ndarray] = {k: np.zeros(n_preds, dtype=np.int64) for k in ks}
    gt_counts = np.zeros(n_preds, dtype=np.int64)
    scored = 0
    for total, gt_by_pred, hits_at, pred_hits_at in stats:
        if total == 0:
            continue
        scored += 1
        for p, c in gt_by_pred.items():
            gt_counts[p] += c
        for k in ks:
            recall_fracs[k].append(hits_at[k] / total)
            for p, c in pred_hits_at[k].items():
                pred_hits[k][p] += c
    if scored == 0:
        raise DatasetError("no image in the split has ground-truth triplets")

    present = gt_counts > 0
    r_at_k = {k: float(np.mean(recall_fracs[k])) for k in ks}
    per_pred: dict[int, tuple[float | None, ...]] = {}
    mr_at_k: dict[int, float] = {}
    for k in ks:
        recalls = tuple(
            float(pred_hits[k][p] / gt_counts[p]) if present[p] else None
            for p in range(n_preds)
        )
        per_pred[k] = recalls
        mr_at_k[k] = float(np.mean([r for r in recalls if r is not None]))
    mric: dict[str, dict[int, float]] = {}
    for source, table in (ic_tables or {}).items():
        mric[source] = {k: mric_at_k(per_pred[k], table) for k in ks}

    echo = dict(config or {})
    echo.setdefault("k_values", list(ks))
    echo.setdefault("all_pairs", all_pairs)
    echo.setdefault("graph_constraint", graph_constraint)
    echo.setdefault("image_averaging", "per_image")
    return EvaluationReport(
        k_values=ks,
        num_images=len(ds.images),
        num_images_scored=scored,
        num_triplets=ds.num_triplets,
        gt_counts=tuple(int(v) for v in gt_counts),
        r_at_k=r_at_k,
        mr_at_k=mr_at_k,
        per_predicate_recall=per_pred,
        mric_at_k=mric,
        config=echo,
    )


def report_to_dict(report: EvaluationReport, vocab) -> dict:
    labels = list(vocab.predicate_labels)
    metrics = {}
    for k in report.k_values:
        entry = {
            "r_at_k": report.r_at_k[k],
            "mr_at_k": report.mr_at_k[k],
            "mric_at_k": {src: vals[k] for src, vals in report.mric_at_k.items()},
            "per_predicate_recall": {
                labels[p]: report.per_predicate_recall[k][p] for p in range(len(labels))
            },
        }
        metrics[str(k)] = entry
    return {
        "kind": "evaluation_report",
        "config": report.config,
        "num_images": report.num_images,
        "num_images_scored": report.num_images_scored,
        "num_triplets": report.num_triplets,
        "gt_counts": {labels[p]: report.gt_counts[p] for p in range(len(labels))},
        "metrics": metrics,
    }


def save_report(report: EvaluationReport, vocab, path: str | Path) -> None:
    write_artifact(path, report_to_dict(report, vocab))


def print_summary(report: EvaluationReport, file=None) -> None:
    """Plain-text metric table, one column per requested K."""
    out = file or sys.stdout
    ks = report.k_values
    header = f"{'metric':<16}" + "".join(f"{'K=%d' % k:>10}" for k in ks)
    print(header, file=out)
    print("-" * len(header), file=out)
    print(f"{'R@K':<16}" + "".join(f"{report.r_at_k[k]:>10.4f}" for k in ks), file=out)
    print(f"{'mR@K':<16}" + "".join(f"{report.mr_at_k[k]:>10.4f}" for k in ks), file=out)
    for source in sorted(report.mric_at_k):
        name = f"mRIC@K ({source})"
        values = report.mric_at_k[source]
        print(f"{name:<16}" + "".join(f"{values[k]:>10.4f}" for k in ks), file=out)
    print(
        f"images scored {report.num_images_scored}/{report.num_images}, "
        f"triplets {report.num_triplets}",
        file=out,
    )


def confusion_report(
    predictor: FrequencyModel,
    ds: Dataset,
    tm: TransitionMatrix | None = None,
):
    """Confusion matrix over a split using the (optionally debiased) argmax."""
    from .debias import ConfusionMatrix

    predictor._check_fitted()
    if predictor.vocabulary_ is not None:
        check_vocabulary_digest(
            predictor.vocabulary_.digest(), ds.vocabulary.digest(), "confusion model"
        )
    k = predictor.n_predicates_
    if tm is not None and tm.num_predicates != k:
        raise ConfigError("transition matrix size does not match the predictor")
    cells = np.zeros((k, k), dtype=np.int64)
    cache: dict[tuple[int, int], int] = {}
    for image in ds.images:
        labels = image.label_by_id
        for t in image.triplets:
            pair = (labels[t.subject_id], labels[t.object_id])
            predicted = cache.get(pair)
            if predicted is None:
                dist = predictor.score_pair(*pair)
                if tm is not None:
                    dist = apply_debias(tm, dist)
                predicted = int(np.argmax(dist))
                cache[pair] = predicted
            cells[t.predicate_index, predicted] += 1
    return ConfusionMatrix(cells=cells)


def trace_fraction(cm) -> float:
    """Mean per-predicate share of mass on the diagonal.

    Rows are normalized before averaging, so every predicate with ground
    truth counts equally regardless of how many samples it has; rows with no
    samples are skipped.
    """
    cells = cm.cells.astype(np.float64)
    sums = cells.sum(axis=1)
    present = sums > 0
    if not present.any():
        raise DatasetError("confusion matrix is empty")
    return float(np.mean(np.diag(cells)[present] / sums[present]))


def heatmap_triples(cm, vocab, table: InformationContentTable) -> list[tuple[str, str, int]]:
    """(row label, column label, count) triples with both axes ordered by
    increasing information content; ties fall back to predicate index."""
    if table.num_predicates != vocab.num_predicates:
        raise ConfigError("ic table size does not match the vocabulary")
    if cm.num_predicates != vocab.num_predicates:
        raise ConfigError("matrix size does not match the vocabulary")
    order = sorted(range(vocab.num_predicates), key=lambda i: (table.ic[i], i))
    labels = vocab.predicate_labels
    return [
        (labels[r], labels[c], int(cm.cells[r, c]))
        for r in order
        for c in order
    ]
