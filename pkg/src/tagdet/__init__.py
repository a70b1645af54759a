"""Temporal action detection from per-snippet score streams.

Actionness grouping proposals, cascaded activity / completeness
classification, and recall / mAP evaluation.
"""

__version__ = "0.1.0"

from .detection import (
    CompletenessFeature,
    Detection,
    GroundTruthInstance,
    SnippetScoreTrack,
    aggregate_region_scores,
    classify_activity,
    completeness_features,
    completeness_score,
    detect,
    detection_confidence,
    heuristic_h1,
    heuristic_h2,
    select_training_samples,
)
from .evaluation import EvalReport, EvalThresholds, average_precision, average_recall, mean_ap, recall_at_iou
from .intervals import ScoredInterval, TemporalInterval, iou, nms, overlap_fraction
from .proposals import ActionnessTrack, Fragment, TagConfig, extract_fragments, grow_from_fragment, sliding_windows, tag_propose
from .svm import LinearModel, SvmConfig, train_completeness_filters

__all__ = [
    "ActionnessTrack",
    "CompletenessFeature",
    "Detection",
    "EvalReport",
    "EvalThresholds",
    "Fragment",
    "GroundTruthInstance",
    "LinearModel",
    "ScoredInterval",
    "SnippetScoreTrack",
    "SvmConfig",
    "TagConfig",
    "TemporalInterval",
    "aggregate_region_scores",
    "average_precision",
    "average_recall",
    "classify_activity",
    "completeness_features",
    "completeness_score",
    "detect",
    "detection_confidence",
    "extract_fragments",
    "grow_from_fragment",
    "heuristic_h1",
    "heuristic_h2",
    "iou",
    "mean_ap",
    "nms",
    "overlap_fraction",
    "recall_at_iou",
    "select_training_samples",
    "sliding_windows",
    "tag_propose",
    "train_completeness_filters",
]
