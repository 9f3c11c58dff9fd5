"""Debiasing toolkit for long-tailed predicate prediction.

Two complementary mechanisms: semantic debiasing pushes a biased model's
score distributions through a frozen transition matrix, and balanced
predicate learning refits the model on an information-content-balanced
adjusted domain. Evaluation follows the PredCls protocol with R@K, mR@K,
and mRIC@K.
"""

from .balance import (
    AdjustedDomain,
    BalancedUndersampler,
    InformationContentTable,
    PredicatePartition,
    compute_ic,
    confidence_undersample,
    ic_from_counts,
    ic_from_dataset,
    load_external_ic,
    load_ic_table,
    load_partition,
    partition_predicates,
    random_undersample,
    save_ic_table,
    save_partition,
)
from .dataset import (
    Dataset,
    ImageRecord,
    ObjectInstance,
    TripletAnnotation,
    Vocabulary,
    load_dataset,
    load_vocabulary,
    predicate_counts,
    predicate_frequencies,
    save_dataset,
    save_vocabulary,
)
from .debias import (
    ConfusionMatrix,
    OverlapMatrix,
    SemanticDebiaser,
    TransitionMatrix,
    apply_debias,
    build_confusion,
    build_overlap,
    build_transition_matrix,
    column_normalize_transpose,
    debias_scores,
    load_confusion,
    load_overlap,
    load_transition,
    mask_bipartite,
    row_normalize,
    save_confusion,
    save_overlap,
    save_transition,
    smooth_and_normalize,
)
from .errors import (
    ArtifactError,
    ConfigError,
    DatasetError,
    PredbiasError,
    VocabularyMismatchError,
)
from .freq_model import FrequencyModel, load_model, save_model
from .metrics import (
    EvaluationReport,
    RankedPrediction,
    confusion_report,
    evaluate_dataset,
    heatmap_triples,
    mric_at_k,
    rank_predcls,
    recall_at_k,
    save_report,
    trace_fraction,
)
from .pipeline import DebiasedPredictor, PipelineConfig, PipelineResult, run_bpl_pipeline
from .synth import SynthConfig, SynthPlan, build_synth_plan, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AdjustedDomain",
    "ArtifactError",
    "BalancedUndersampler",
    "ConfigError",
    "ConfusionMatrix",
    "Dataset",
    "DatasetError",
    "DebiasedPredictor",
    "EvaluationReport",
    "FrequencyModel",
    "ImageRecord",
    "InformationContentTable",
    "ObjectInstance",
    "OverlapMatrix",
    "PipelineConfig",
    "PipelineResult",
    "PredbiasError",
    "PredicatePartition",
    "RankedPrediction",
    "SemanticDebiaser",
    "SynthConfig",
    "SynthPlan",
    "TransitionMatrix",
    "TripletAnnotation",
    "Vocabulary",
    "VocabularyMismatchError",
    "apply_debias",
    "build_confusion",
    "build_overlap",
    "build_synth_plan",
    "build_transition_matrix",
    "column_normalize_transpose",
    "compute_ic",
    "confidence_undersample",
    "confusion_report",
    "debias_scores",
    "evaluate_dataset",
    "generate_synthetic",
    "heatmap_triples",
    "ic_from_counts",
    "ic_from_dataset",
    "load_confusion",
    "load_dataset",
    "load_external_ic",
    "load_ic_table",
    "load_model",
    "load_overlap",
    "load_partition",
    "load_transition",
    "load_vocabulary",
    "mask_bipartite",
    "mric_at_k",
    "partition_predicates",
    "predicate_counts",
    "predicate_frequencies",
    "random_undersample",
    "rank_predcls",
    "recall_at_k",
    "row_normalize",
    "run_bpl_pipeline",
    "save_confusion",
    "save_dataset",
    "save_ic_table",
    "save_model",
    "save_overlap",
    "save_partition",
    "save_report",
    "save_transition",
    "save_vocabulary",
    "smooth_and_normalize",
    "trace_fraction",
]
