"""Proposal recall and detection mAP.

Ground truth and detections are matched within a video only. Proposals can be
passed as a plain list (a single video) or as a ``{video_id: proposals}``
mapping.
"""

from __future__ import annotations

import json
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .detection import Detection, GroundTruthInstance
from .intervals import TemporalInterval, iou_matrix


def _grid(lo: float, hi: float, step: float) -> tuple[float, ...]:
    n = int(round((hi - lo) / step))
    return tuple(round(lo + k * step, 10) for k in range(n + 1))


ANET_AVERAGE_GRID = _grid(0.5, 0.95, 0.05)
ANET_GRID = (0.5, 0.75, 0.95)
THUMOS_GRID = _grid(0.1, 0.5, 0.1)
AR_GRID = ANET_AVERAGE_GRID


class EvaluationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EvalThresholds:
    iou_grid: tuple[float, ...] = AR_GRID

    def __post_init__(self) -> None:
        grid = tuple(float(t) for t in self.iou_grid)
        if not grid:
            raise ValueError("iou_grid must be non-empty")
        if any(not 0.0 < t <= 1.0 for t in grid):
            raise ValueError("IOU thresholds must lie in (0, 1]")
        if list(grid) != sorted(grid):
            raise ValueError("iou_grid must be sorted")
        object.__setattr__(self, "iou_grid", grid)


@dataclass
class EvalReport:
    metric: str
    per_threshold: dict[float, float]
    per_class: dict[int, dict[float, float]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def average(self) -> float:
        vals = list(self.per_threshold.values())
        return float(np.mean(vals)) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "per_threshold": {f"{t:g}": v for t, v in self.per_threshold.items()},
            "average": self.average,
            "per_class": {
                str(c): {f"{t:g}": v for t, v in aps.items()} for c, aps in sorted(self.per_class.items())
            },
            "warnings": list(self.warnings),
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EvalReport":
        return cls(
            metric=doc["metric"],
            per_threshold={float(t): float(v) for t, v in doc["per_threshold"].items()},
            per_class={
                int(c): {float(t): float(v) for t, v in aps.items()} for c, aps in doc.get("per_class", {}).items()
            },
            warnings=list(doc.get("warnings", [])),
            extra=dict(doc.get("extra", {})),
        )

    def to_table(self, label: str = "", scale: float = 100.0) -> str:
        """Aligned plain-text table with thresholds as columns plus an ``Average`` column."""
        headers = ["Method"] + [f"{t:g}" for t in self.per_threshold] + ["Average"]
        row = [label or self.metric] + [f"{v * scale:.2f}" for v in self.per_threshold.values()]
        row.append(f"{self.average * scale:.2f}")
        return format_table(headers, [row])


def format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [headers, *rows]) for i in range(len(headers))]

    def fmt(r: Sequence[str]) -> str:
        cells = [str(r[0]).ljust(widths[0])] + [str(c).rjust(w) for c, w in zip(r[1:], widths[1:])]
        return " | ".join(cells).rstrip()

    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(headers), sep, *(fmt(r) for r in rows)]) + "\n"


ProposalSet = Union[Sequence[TemporalInterval], Mapping[str, Sequence[TemporalInterval]]]


def _group_gts(gts: Sequence[GroundTruthInstance]) -> dict[str, list[GroundTruthInstance]]:
    out: dict[str, list[GroundTruthInstance]] = defaultdict(list)
    for g in gts:
        out[g.video_id].append(g)
    return out


def _best_ious(proposals: ProposalSet, gts: Sequence[GroundTruthInstance]) -> np.ndarray:
    """Best proposal IOU for every ground-truth instance (in input order)."""
    if isinstance(proposals, Mapping):
        lookup = proposals
    else:
        lookup = None
    best = np.zeros(len(gts))
    by_video: dict[str, list[int]] = defaultdict(list)
    for i, g in enumerate(gts):
        by_video[g.video_id].append(i)
    for vid, idx in by_video.items():
        props = proposals if lookup is None else lookup.get(vid, [])
        if not props:
            continue
        P = np.array([[p.start, p.end] for p in props])
        G = np.array([[gts[i].interval.start, gts[i].interval.end] for i in idx])
        best[idx] = iou_matrix(G, P).max(axis=1)
    return best


def recall_at_iou(proposals: ProposalSet, gts: Sequence[GroundTruthInstance], threshold: float) -> float:
    """Fraction of instances with at least one proposal at IOU >= ``threshold``.

    With no instances the recall is defined as 1.0 and an
    :class:`EvaluationWarning` is issued.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    if not gts:
        warnings.warn("no ground-truth instances; recall defined as 1.0", EvaluationWarning, stacklevel=2)
        return 1.0
    return float(np.mean(_best_ious(proposals, gts) >= threshold))


def average_recall(
    proposals: ProposalSet,
    gts: Sequence[GroundTruthInstance],
    grid: EvalThresholds = EvalThresholds(),
) -> EvalReport:
    report = EvalReport("AR", {})
    if not gts:
        report.warnings.append("no ground-truth instances; recall defined as 1.0")
        report.per_threshold = {t: 1.0 for t in grid.iou_grid}
        return report
    best = _best_ious(proposals, gts)
    report.per_threshold = {t: float(np.mean(best >= t)) for t in grid.iou_grid}
    if isinstance(proposals, Mapping):
        report.extra["num_proposals"] = int(sum(len(v) for v in proposals.values()))
    else:
        report.extra["num_proposals"] = len(proposals)
    return report


def detection_order_key(d: Detection) -> tuple[float, float]:
    return (-d.s_det, d.interval.start)


def match_detections(
    detections: Sequence[Detection],
    gts: Sequence[GroundTruthInstance],
    class_id: int,
    threshold: float,
) -> tuple[np.ndarray, int]:
    """TP flags of the class-``class_id`` detections in ranked order, and the instance count.

    Each detection, in score order, claims the unmatched same-video instance
    of that class with the highest IOU, provided that IOU reaches
    ``threshold``.
    """
    dets = sorted((d for d in detections if d.class_id == class_id), key=detection_order_key)
    gt_by_video = _group_gts([g for g in gts if g.class_id == class_id])
    n_gt = sum(len(v) for v in gt_by_video.values())
    ious = {
        vid: np.array([[g.interval.start, g.interval.end] for g in v]) for vid, v in gt_by_video.items()
    }
    used = {vid: np.zeros(len(v), dtype=bool) for vid, v in gt_by_video.items()}
    tp = np.zeros(len(dets), dtype=bool)
    for k, d in enumerate(dets):
        bounds = ious.get(d.video_id)
        if bounds is None:
            continue
        o = iou_matrix(np.array([[d.interval.start, d.interval.end]]), bounds)[0]
        o[used[d.video_id]] = -1.0
        j = int(np.argmax(o))
        if o[j] >= threshold:
            tp[k] = True
            used[d.video_id][j] = True
    return tp, n_gt


def ap_from_matches(tp: np.ndarray, n_gt: int) -> float:
    """All-point AP: precision made monotone non-increasing, summed over recall steps."""
    if n_gt == 0 or tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    precision = ctp / np.arange(1, tp.size + 1)
    recall = ctp / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * envelope))


def average_precision(
    detections: Sequence[Detection],
    gts: Sequence[GroundTruthInstance],
    class_id: int,
    threshold: float,
) -> float:
    """AP of one class at one IOU threshold; 0.0 (with a warning) when the class has no instances."""
    tp, n_gt = match_detections(detections, gts, class_id, threshold)
    if n_gt == 0:
        warnings.warn(f"class {class_id} has no ground-truth instances; AP defined as 0", EvaluationWarning, stacklevel=2)
        return 0.0
    return ap_from_matches(tp, n_gt)


def mean_ap(
    detections: Sequence[Detection],
    gts: Sequence[GroundTruthInstance],
    grid: EvalThresholds = EvalThresholds(),
    classes: Optional[Sequence[int]] = None,
) -> EvalReport:
    """Per-threshold mAP over the classes present in ``gts`` (or ``classes``)."""
    report = EvalReport("mAP", {})
    present = sorted({g.class_id for g in gts}) if classes is None else sorted(classes)
    if not present:
        report.warnings.append("no ground-truth instances; mAP defined as 0")
        report.per_threshold = {t: 0.0 for t in grid.iou_grid}
        return report
    for c in present:
        aps = {}
        for t in grid.iou_grid:
            tp, n_gt = match_detections(detections, gts, c, t)
            if n_gt == 0:
                if t == grid.iou_grid[0]:
                    report.warnings.append(f"class {c} has no ground-truth instances; AP defined as 0")
                aps[t] = 0.0
            else:
                aps[t] = ap_from_matches(tp, n_gt)
        report.per_class[c] = aps
    report.per_threshold = {
        t: float(np.mean([report.per_class[c][t] for c in present])) for t in grid.iou_grid
    }
    return report
