"""Three-stage balanced predicate learning plus optional semantic debiasing.

Stage 1 fits the frequency model on the original domain. Stage 2 partitions
predicates by information content and builds the adjusted domain with BLRU or
BLRA. Stage 3 refits the model on the adjusted domain. The transition matrix
rides on top: confusion routes use the stage-1 model's mistakes on the
original domain, overlap routes use the original domain's context statistics,
and the result debiases the refit model's scores at evaluation time.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .balance import (
    AdjustedDomain,
    BalancedUndersampler,
    InformationContentTable,
    PredicatePartition,
    STRATEGIES,
    ic_from_dataset,
    partition_predicates,
    save_ic_table,
    save_partition,
)
from .dataset import Dataset, save_dataset
from .debias import (
    ConfusionMatrix,
    OverlapMatrix,
    TRANSITION_SOURCES,
    TransitionMatrix,
    apply_debias,
    build_confusion,
    build_overlap,
    build_transition_matrix,
    save_confusion,
    save_overlap,
    save_transition,
)
from .errors import ConfigError, PredbiasError
from .freq_model import FrequencyModel, save_model
from .metrics import DEFAULT_K_VALUES, EvaluationReport, evaluate_dataset, save_report
from .artifacts import write_artifact


@dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters of one pipeline run.

    ``strategy`` None skips rebalancing entirely; ``transition_source`` None
    skips debiasing. With both None the run degenerates to a plain baseline
    fit and evaluation.
    """

    alpha: float = 1.0
    m: int = 15
    n: int = 2000
    epsilon: float = 1.0
    ic_base: float = 2.0
    strategy: str | None = None
    transition_source: str | None = None
    seed: int = 0
    k_values: tuple[int, ...] = DEFAULT_K_VALUES
    all_pairs: bool = False
    graph_constraint: bool = True

    def __post_init__(self) -> None:
        if self.alpha < 0 or not np.isfinite(self.alpha):
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.ic_base <= 1.0:
            raise ConfigError(f"ic_base must be > 1, got {self.ic_base}")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ConfigError(
                f"strategy must be one of {STRATEGIES} or None, got {self.strategy!r}"
            )
        if self.transition_source is not None and self.transition_source not in TRANSITION_SOURCES:
            raise ConfigError(
                f"transition_source must be one of {TRANSITION_SOURCES} or None, "
                f"got {self.transition_source!r}"
            )
        ks = tuple(int(k) for k in self.k_values)
        if not ks or any(k < 1 for k in ks):
            raise ConfigError(f"k_values must be positive integers, got {self.k_values}")
        object.__setattr__(self, "k_values", ks)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "m": self.m,
            "n": self.n,
            "epsilon": self.epsilon,
            "ic_base": self.ic_base,
            "strategy": self.strategy,
            "transition_source": self.transition_source,
            "seed": self.seed,
            "k_values": list(self.k_values),
            "all_pairs": self.all_pairs,
            "graph_constraint": self.graph_constraint,
        }


@dataclass(frozen=True)
class DebiasedPredictor:
    """A fitted model plus an optional frozen transition matrix."""

    model: FrequencyModel
    transition: TransitionMatrix | None = None

    def score_pair(self, subject_label: int, object_label: int) -> np.ndarray:
        dist = self.model.score_pair(subject_label, object_label)
        if self.transition is None:
            return dist
        return apply_debias(self.transition, dist)

    def predict_proba(self, X) -> np.ndarray:
        proba = self.model.predict_proba(X)
        if self.transition is None:
            return proba
        from .debias import debias_scores

        return debias_scores(self.transition, proba)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


@dataclass
class PipelineResult:
    """Everything one pipeline run produced, in memory."""

    config: PipelineConfig
    stage1: FrequencyModel
    predictor: FrequencyModel
    ic_table: InformationContentTable
    partition: PredicatePartition
    adjusted: AdjustedDomain | None = None
    confusion: ConfusionMatrix | None = None
    overlap: OverlapMatrix | None = None
    transition: TransitionMatrix | None = None
    report: EvaluationReport | None = None

    @property
    def debiased(self) -> DebiasedPredictor:
        return DebiasedPredictor(model=self.predictor, transition=self.transition)


@contextmanager
def _stage(name: str):
    """Prefix any pipeline error with the stage it came from."""
    try:
        yield
    except PredbiasError as exc:
        raise type(exc)(f"stage {name}: {exc}") from exc


def run_bpl_pipeline(
    train: Dataset,
    config: PipelineConfig,
    test: Dataset | None = None,
    out_dir: str | Path | None = None,
    provenance: dict | None = None,
    external_ic: InformationContentTable | None = None,
    threads: int | None = None,
) -> PipelineResult:
    """Run the pipeline and, when ``out_dir`` is given, persist every stage.

    All persisted artifacts embed ``provenance`` (the caller's config echo and
    input digests), so a rerun with identical inputs writes identical bytes.
    """
    prov = provenance or {}
    out = Path(out_dir) if out_dir is not None else None
    vocab = train.vocabulary

    with _stage("fit"):
        stage1 = FrequencyModel.from_dataset(train, epsilon=config.epsilon)
        if out is not None:
            save_model(stage1, out / "model_original.json", provenance=prov)

    with _stage("information"):
        ic_table = ic_from_dataset(train, base=config.ic_base)
        if config.m >= vocab.num_predicates:
            raise ConfigError(
                f"m={config.m} must be smaller than the predicate count {vocab.num_predicates}"
            )
        partition = partition_predicates(ic_table, config.m)
        if out is not None:
            save_ic_table(ic_table, vocab, out / "ic_table.json", provenance=prov)
            save_partition(partition, vocab, out / "partition.json", provenance=prov)

    adjusted = None
    predictor = stage1
    if config.strategy is not None:
        with _stage("balance"):
            sampler = BalancedUndersampler(
                strategy=config.strategy,
                partition=partition,
                n_per_common=config.n,
                seed=config.seed,
                model=stage1 if config.strategy == "blra" else None,
            )
            adjusted = sampler.fit_resample(train)
            if out is not None:
                save_dataset(adjusted.dataset, out / "adjusted_train.jsonl")
                write_artifact(
                    out / "adjusted_train.provenance.json",
                    {"kind": "adjusted_domain", **adjusted.provenance(), "provenance": prov},
                )
        with _stage("refit"):
            predictor = FrequencyModel.from_dataset(adjusted.dataset, epsilon=config.epsilon)
            if out is not None:
                save_model(predictor, out / "model_refit.json", provenance=prov)

    confusion = None
    overlap = None
    transition = None
    if config.transition_source is not None:
        with _stage("transition"):
            if config.transition_source in ("cm", "ccm"):
                confusion = build_confusion(stage1, train)
                if out is not None:
                    save_confusion(confusion, vocab, out / "confusion.json", provenance=prov)
            else:
                overlap = build_overlap(train)
                if out is not None:
                    save_overlap(overlap, vocab, out / "overlap.json", provenance=prov)
            transition = build_transition_matrix(
                config.transition_source,
                config.alpha,
                confusion=confusion,
                overlap=overlap,
                partition=partition,
            )
            if out is not None:
                save_transition(transition, vocab, out / "transition.json", provenance=prov)

    report = None
    if test is not None:
        with _stage("evaluate"):
            ic_tables = {"dataset": ic_table}
            if external_ic is not None:
                ic_tables["external"] = external_ic
            echo = dict(prov)
            echo["pipeline"] = config.to_dict()
            report = evaluate_dataset(
                predictor,
                test,
                tm=transition,
                k_values=config.k_values,
                ic_tables=ic_tables,
                all_pairs=config.all_pairs,
                graph_constraint=config.graph_constraint,
                threads=threads,
                config=echo,
            )
            if out is not None:
                save_report(report, vocab, out / "report.json")

    return PipelineResult(
        config=config,
        stage1=stage1,
        predictor=predictor,
        ic_table=ic_table,
        partition=partition,
        adjusted=adjusted,
        confusion=confusion,
        overlap=overlap,
        transition=transition,
        report=report,
    )
