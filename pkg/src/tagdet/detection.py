"""Cascaded proposal classification: activity classification, completeness
filtering, detection confidence and final NMS.

Also hosts the ablation variants: duration heuristics in place of the
completeness filter, and a one-stage classifier that must reject background
and incomplete proposals on its own.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Literal, Mapping, MutableMapping, Optional, Sequence

import numpy as np

from .intervals import ScoredInterval, TemporalInterval, iou, nms, overlap_fraction
from .proposals import ActionnessTrack
from .svm import LinearModel

POSITIVE_IOU = 0.7
NEGATIVE_OVERLAP = 0.05
INCOMPLETE_IOU = 0.3
ONE_STAGE_BACKGROUND_IOU = 0.3

NMS_PRESETS = {"anet": 0.6, "thumos": 0.2}

Pooling = Literal["mean", "max"]


@dataclass(frozen=True)
class SnippetScoreTrack:
    """Per-snippet probabilities over K activity classes plus background (last column)."""

    video_id: str
    snippet_stride: float
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 2:
            raise ValueError(f"{self.video_id}: probs must have shape (N >= 1, K + 1 >= 2)")
        if not self.snippet_stride > 0:
            raise ValueError(f"{self.video_id}: snippet stride must be > 0")
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ValueError(f"{self.video_id}: probabilities must lie in [0, 1]")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
            raise ValueError(f"{self.video_id}: per-snippet probabilities must sum to 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "snippet_stride", float(self.snippet_stride))

    def __len__(self) -> int:
        return int(self.probs.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.probs.shape[1]) - 1

    @property
    def duration(self) -> float:
        return len(self) * self.snippet_stride


@dataclass(frozen=True)
class GroundTruthInstance:
    interval: TemporalInterval
    class_id: int
    video_id: str = ""

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")


@dataclass(frozen=True)
class CompletenessFeature:
    whole: float
    first_half: float
    second_half: float
    before: float
    after: float

    def as_array(self) -> np.ndarray:
        return np.array([self.whole, self.first_half, self.second_half, self.before, self.after])


@dataclass(frozen=True)
class Detection:
    interval: TemporalInterval
    class_id: int
    p_a: float
    s_c: float
    s_det: float
    video_id: str = ""

    def __post_init__(self) -> None:
        if not 0.0 < self.p_a <= 1.0:
            raise ValueError(f"p_a must lie in (0, 1], got {self.p_a}")


# -- training sample selection ---------------------------------------------


def select_training_samples(
    proposals: Sequence[TemporalInterval],
    gts: Sequence[GroundTruthInstance],
    mode: Literal["cascade", "one_stage"] = "cascade",
) -> tuple[list[tuple[TemporalInterval, int]], list[TemporalInterval]]:
    """Split proposals into labeled positives and negatives for classifier training.

    Positives have IOU > 0.7 with their best-matching instance and take its
    class. In ``cascade`` mode a negative must overlap the annotations for
    less than 5% of its span; in ``one_stage`` mode any proposal with max IOU
    below 0.3 is negative, so partial hits on an instance are negatives too.
    Everything else is discarded.
    """
    gt_ivs = [g.interval for g in gts]
    positives: list[tuple[TemporalInterval, int]] = []
    negatives: list[TemporalInterval] = []
    for prop in proposals:
        best, best_cls = 0.0, None
        for g in gts:
            o = iou(prop, g.interval)
            if o > best:
                best, best_cls = o, g.class_id
        if best > POSITIVE_IOU:
            positives.append((prop, best_cls))
        elif mode == "cascade":
            if overlap_fraction(prop, gt_ivs) < NEGATIVE_OVERLAP:
                negatives.append(prop)
        elif mode == "one_stage":
            if best < ONE_STAGE_BACKGROUND_IOU:
                negatives.append(prop)
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return positives, negatives


# -- stage 1: activity classification ---------------------------------------


def _check_region(track: SnippetScoreTrack, region: TemporalInterval) -> None:
    if region.start >= track.duration:
        raise ValueError(
            f"{track.video_id}: region [{region.start}, {region.end}] lies outside the track span "
            f"[0, {track.duration}]"
        )


def aggregate_region_scores(
    track: SnippetScoreTrack, region: TemporalInterval, pooling: Pooling = "mean"
) -> np.ndarray:
    """Region-level probability vector from the snippets whose midpoints fall in ``region``.

    Falls back to the single snippet nearest the region's midpoint when no
    snippet midpoint lies inside. ``pooling="max"`` takes the per-class max
    and renormalizes.
    """
    _check_region(track, region)
    stride = track.snippet_stride
    n = len(track)
    # midpoint (i + 0.5) * stride in [start, end)
    lo = max(0, math.ceil(region.start / stride - 0.5))
    hi = min(n, math.ceil(region.end / stride - 0.5))
    if hi <= lo:
        idx = min(n - 1, max(0, int(region.midpoint // stride)))
        return track.probs[idx].copy()
    block = track.probs[lo:hi]
    if pooling == "mean":
        return block.mean(axis=0)
    if pooling == "max":
        pooled = block.max(axis=0)
        return pooled / pooled.sum()
    raise ValueError(f"unknown pooling {pooling!r}")


def classify_activity(region_probs: np.ndarray) -> tuple[Optional[int], float]:
    """Arg-max label of a region probability vector whose last entry is background.

    Returns ``(None, p_background)`` when background wins, otherwise
    ``(class_id, p_a)``. Ties go to the lowest index.
    """
    probs = np.asarray(region_probs, dtype=np.float64)
    label = int(np.argmax(probs))
    if label == probs.size - 1:
        return None, float(probs[label])
    return label, float(probs[label])


# -- stage 2: completeness ---------------------------------------------------


def _span_means(values: np.ndarray, stride: float, spans: np.ndarray) -> np.ndarray:
    """Time-weighted mean of a piecewise-constant snippet signal over each [a, b) span.

    Spans are clipped to the track; empty clipped spans give 0.
    """
    n = values.size
    total = n * stride
    cum = np.concatenate(([0.0], np.cumsum(values) * stride))

    def integral(t: np.ndarray) -> np.ndarray:
        t = np.clip(t, 0.0, total)
        k = np.minimum(np.floor(t / stride).astype(np.int64), n - 1)
        return cum[k] + (t - k * stride) * values[k]

    a = np.clip(spans[:, 0], 0.0, total)
    b = np.clip(spans[:, 1], 0.0, total)
    width = b - a
    out = np.zeros(len(spans))
    ok = width > 1e-12
    out[ok] = (integral(b[ok]) - integral(a[ok])) / width[ok]
    return np.clip(out, 0.0, 1.0)


def completeness_features(
    track: SnippetScoreTrack,
    region: TemporalInterval,
    class_id: int,
    context_ratio: float = 0.25,
) -> CompletenessFeature:
    """Two-level temporal pyramid plus before/after context of one class's scores."""
    if not 0 <= class_id < track.num_classes:
        raise ValueError(f"class_id {class_id} outside [0, {track.num_classes})")
    s, e = region.start, region.end
    mid = region.midpoint
    ctx = context_ratio * region.duration()
    spans = np.array([[s, e], [s, mid], [mid, e], [s - ctx, s], [e, e + ctx]])
    vals = _span_means(track.probs[:, class_id], track.snippet_stride, spans)
    return CompletenessFeature(*(float(v) for v in vals))


def completeness_score(model: LinearModel, feature: CompletenessFeature) -> float:
    return float(np.dot(model.weights, feature.as_array()) + model.bias)


def detection_confidence(p_a: float, s_c: float) -> float:
    """Fused confidence ``p_a * exp(s_c)``."""
    if not p_a > 0:
        raise ValueError(f"p_a must be > 0, got {p_a}")
    return p_a * math.exp(s_c)


def completeness_training_set(
    track: SnippetScoreTrack,
    proposals: Sequence[TemporalInterval],
    gts: Sequence[GroundTruthInstance],
    context_ratio: float = 0.25,
) -> dict[int, tuple[list[np.ndarray], list[int]]]:
    """Per-class completeness features and +1/-1 labels for one video.

    A proposal is a positive for class c when its best class-c instance has
    IOU > 0.7, and a negative (incomplete or over-complete) when that IOU is
    strictly between 0 and 0.3. Proposals touching no class-c instance are
    left to the activity classifier.
    """
    out: dict[int, tuple[list[np.ndarray], list[int]]] = {}
    classes = sorted({g.class_id for g in gts})
    for c in classes:
        inst = [g.interval for g in gts if g.class_id == c]
        xs, ys = out.setdefault(c, ([], []))
        for prop in proposals:
            best = max(iou(prop, g) for g in inst)
            if best > POSITIVE_IOU:
                label = 1
            elif 0.0 < best < INCOMPLETE_IOU:
                label = -1
            else:
                continue
            xs.append(completeness_features(track, prop, c, context_ratio).as_array())
            ys.append(label)
    return out


# -- duration heuristics -------------------------------------------------------


def heuristic_h1(p_a: float, relative_duration: float, alpha: float = 0.7) -> float:
    """``p_a * T**alpha`` with ``T`` the proposal duration relative to the video."""
    if not relative_duration > 0:
        raise ValueError(f"relative duration must be > 0, got {relative_duration}")
    return p_a * relative_duration**alpha


@dataclass(frozen=True)
class DurationHistogram:
    """Normalized histogram of durations; ``edges`` has one more entry than ``freqs``."""

    edges: tuple[float, ...]
    freqs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.edges) != len(self.freqs) + 1 or not self.freqs:
            raise ValueError("edges must have exactly one more entry than freqs")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("edges must be strictly increasing")

    @classmethod
    def from_durations(cls, durations: Sequence[float], bins: int = 20, log: bool = True) -> "DurationHistogram":
        d = np.asarray(durations, dtype=np.float64)
        if d.size == 0:
            raise ValueError("need at least one duration")
        lo, hi = float(d.min()), float(d.max())
        if hi <= lo:
            lo, hi = lo * 0.5, hi * 1.5 if hi > 0 else 1.0
        edges = np.geomspace(lo, hi, bins + 1) if log and lo > 0 else np.linspace(lo, hi, bins + 1)
        edges[0], edges[-1] = lo, hi
        counts, _ = np.histogram(d, bins=edges)
        return cls(tuple(float(e) for e in edges), tuple(float(c) for c in counts / d.size))

    def frequency(self, duration: float) -> float:
        edges = self.edges
        if duration < edges[0] or duration > edges[-1]:
            return 0.0
        k = int(np.searchsorted(edges, duration, side="right")) - 1
        return self.freqs[min(k, len(self.freqs) - 1)]


def heuristic_h2(p_a: float, duration: float, duration_histogram: DurationHistogram) -> float:
    """``p_a`` times the training frequency of the proposal's duration bin."""
    return p_a * duration_histogram.frequency(duration)


# -- inference -----------------------------------------------------------------

Scoring = Literal["completeness", "h1", "h2"]


def _check_aligned(actionness: ActionnessTrack, scores: SnippetScoreTrack) -> None:
    if actionness.video_id != scores.video_id:
        raise ValueError(f"track video ids differ: {actionness.video_id!r} vs {scores.video_id!r}")
    if actionness.snippet_stride != scores.snippet_stride:
        raise ValueError(f"{scores.video_id}: actionness and class-score strides differ")


def detect(
    actionness: ActionnessTrack,
    scores: SnippetScoreTrack,
    proposals: Sequence[TemporalInterval],
    models: Sequence[LinearModel] | Mapping[int, LinearModel],
    nms_iou: float = NMS_PRESETS["anet"],
    *,
    scoring: Scoring = "completeness",
    context_ratio: float = 0.25,
    pooling: Pooling = "mean",
    alpha: float = 0.7,
    duration_histogram: Optional[DurationHistogram] = None,
    diagnostics: Optional[MutableMapping[str, int]] = None,
) -> list[Detection]:
    """Run the cascade on one video's proposals.

    Background proposals are dropped by the activity classifier; survivors are
    scored by the completeness filter of their class (or a duration heuristic),
    suppressed with class-aware NMS and returned by descending confidence.
    Proposals of a class without a model are dropped and counted under
    ``missing_model`` in ``diagnostics``.
    """
    _check_aligned(actionness, scores)
    by_class = models if isinstance(models, Mapping) else {m.class_id: m for m in models}
    if scoring == "h2" and duration_histogram is None:
        raise ValueError("h2 scoring needs a duration histogram")
    counts: Counter = Counter()
    candidates: list[ScoredInterval] = []
    payload: dict[int, Detection] = {}
    for prop in proposals:
        label, p_a = classify_activity(aggregate_region_scores(scores, prop, pooling))
        if label is None:
            counts["background"] += 1
            continue
        if scoring == "completeness":
            model = by_class.get(label)
            if model is None:
                counts["missing_model"] += 1
                continue
            s_c = completeness_score(model, completeness_features(scores, prop, label, context_ratio))
            s_det = detection_confidence(p_a, s_c)
        elif scoring == "h1":
            rel = prop.duration() / actionness.duration
            s_det = heuristic_h1(p_a, min(rel, 1.0), alpha)
            s_c = math.log(s_det / p_a)
        elif scoring == "h2":
            s_det = heuristic_h2(p_a, prop.duration(), duration_histogram)
            s_c = math.log(s_det / p_a) if s_det > 0 else -math.inf
        else:
            raise ValueError(f"unknown scoring {scoring!r}")
        det = Detection(prop, label, p_a, s_c, s_det, scores.video_id)
        candidates.append(ScoredInterval(prop, s_det, label))
        payload[id(candidates[-1])] = det
        counts["scored"] += 1
    kept = nms(candidates, nms_iou, class_aware=True)
    if diagnostics is not None:
        for k, v in counts.items():
            diagnostics[k] = diagnostics.get(k, 0) + v
    return sorted((payload[id(k)] for k in kept), key=detection_sort_key)


def detection_sort_key(d: Detection) -> tuple[float, float, float, int]:
    return (-d.s_det, d.interval.start, d.interval.duration(), d.class_id)


# -- one-stage ablation -------------------------------------------------------


def one_stage_training_set(
    track: SnippetScoreTrack,
    proposals: Sequence[TemporalInterval],
    gts: Sequence[GroundTruthInstance],
    pooling: Pooling = "mean",
) -> dict[int, tuple[list[np.ndarray], list[int]]]:
    """One-vs-rest samples over region-level class scores.

    For class c, positives are proposals labeled c by
    :func:`select_training_samples` in ``one_stage`` mode; negatives are its
    background/incomplete pool plus the positives of other classes.
    """
    positives, negatives = select_training_samples(proposals, gts, mode="one_stage")
    feats = {}
    for prop in [p for p, _ in positives] + list(negatives):
        feats[prop] = aggregate_region_scores(track, prop, pooling)
    out: dict[int, tuple[list[np.ndarray], list[int]]] = {}
    for c in range(track.num_classes):
        xs, ys = out.setdefault(c, ([], []))
        for prop, label in positives:
            xs.append(feats[prop])
            ys.append(1 if label == c else -1)
        for prop in negatives:
            xs.append(feats[prop])
            ys.append(-1)
    return out


def detect_one_stage(
    scores: SnippetScoreTrack,
    proposals: Sequence[TemporalInterval],
    models: Sequence[LinearModel],
    nms_iou: float = NMS_PRESETS["anet"],
    pooling: Pooling = "mean",
) -> list[Detection]:
    """Score every proposal with all one-stage classifiers; the best class wins.

    The classifier margin plays the role of ``s_c`` with ``p_a`` fixed to 1.
    """
    if not models:
        return []
    ordered = sorted(models, key=lambda m: m.class_id)
    W = np.array([m.weights for m in ordered])
    b = np.array([m.bias for m in ordered])
    candidates: list[ScoredInterval] = []
    payload: dict[int, Detection] = {}
    for prop in proposals:
        margins = W @ aggregate_region_scores(scores, prop, pooling) + b
        k = int(np.argmax(margins))
        s_c = float(margins[k])
        det = Detection(prop, ordered[k].class_id, 1.0, s_c, detection_confidence(1.0, s_c), scores.video_id)
        candidates.append(ScoredInterval(prop, det.s_det, det.class_id))
        payload[id(candidates[-1])] = det
    kept = nms(candidates, nms_iou, class_aware=True)
    return sorted((payload[id(k)] for k in kept), key=detection_sort_key)
