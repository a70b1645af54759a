"""Temporal interval arithmetic, overlap measures and greedy NMS.

Intervals are treated as half-open ``[start, end)`` in all arithmetic, so two
intervals that merely touch have zero intersection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True, order=True)
class TemporalInterval:
    start: float
    end: float

    def __post_init__(self) -> None:
        start, end = float(self.start), float(self.end)
        if not (math.isfinite(start) and math.isfinite(end)):
            raise ValueError(f"non-finite interval [{self.start}, {self.end}]")
        if start < 0.0:
            raise ValueError(f"interval start must be >= 0, got {start}")
        if end <= start:
            raise ValueError(f"interval end ({end}) must exceed start ({start})")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    def duration(self) -> float:
        return self.end - self.start

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class ScoredInterval:
    interval: TemporalInterval
    score: float
    class_id: Optional[int] = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


def intersection(a: TemporalInterval, b: TemporalInterval) -> float:
    return max(0.0, min(a.end, b.end) - max(a.start, b.start))


def iou(a: TemporalInterval, b: TemporalInterval) -> float:
    """Temporal intersection-over-union of two intervals; 0.0 when disjoint."""
    inter = intersection(a, b)
    if inter <= 0.0:
        return 0.0
    union = (a.end - a.start) + (b.end - b.start) - inter
    return inter / union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IOU between two ``(n, 2)`` / ``(m, 2)`` arrays of [start, end] rows."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    inter = np.minimum(a[:, None, 1], b[None, :, 1]) - np.maximum(a[:, None, 0], b[None, :, 0])
    inter = np.maximum(inter, 0.0)
    union = (a[:, None, 1] - a[:, None, 0]) + (b[None, :, 1] - b[None, :, 0]) - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0.0)
    return out


def union_length(intervals: Sequence[TemporalInterval]) -> float:
    """Total length covered by ``intervals``; overlapping time counts once."""
    total = 0.0
    cur_start = cur_end = None
    for iv in sorted(intervals):
        if cur_end is None or iv.start > cur_end:
            if cur_end is not None:
                total += cur_end - cur_start
            cur_start, cur_end = iv.start, iv.end
        else:
            cur_end = max(cur_end, iv.end)
    if cur_end is not None:
        total += cur_end - cur_start
    return total


def overlap_fraction(a: TemporalInterval, annotations: Sequence[TemporalInterval]) -> float:
    """Fraction of ``a``'s span covered by the union of ``annotations``."""
    clipped = []
    for ann in annotations:
        s, e = max(a.start, ann.start), min(a.end, ann.end)
        if e > s:
            clipped.append(TemporalInterval(s, e))
    if not clipped:
        return 0.0
    return min(1.0, union_length(clipped) / a.duration())


def nms_order_key(item: ScoredInterval) -> tuple[float, float, float]:
    """Sort key: descending score, then earlier start, then shorter duration."""
    return (-item.score, item.interval.start, item.interval.duration())


def nms(
    items: Sequence[ScoredInterval],
    threshold: float,
    class_aware: bool = False,
) -> list[ScoredInterval]:
    """Greedy non-maximal suppression.

    Repeatedly keeps the best remaining item (see :func:`nms_order_key`) and
    drops every remaining item whose IOU with it exceeds ``threshold``. With
    ``class_aware`` only items sharing a ``class_id`` suppress each other.
    Kept items are returned unchanged, in keep order.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    if not items:
        return []

    ordered = sorted(items, key=nms_order_key)
    n = len(ordered)
    bounds = np.array([[it.interval.start, it.interval.end] for it in ordered])
    classes = np.array([-1 if it.class_id is None else it.class_id for it in ordered])
    starts, ends = bounds[:, 0], bounds[:, 1]
    lengths = ends - starts
    # An item j with IOU > t > 0 against i has len_j < len_i / t and overlaps i,
    # so its start lies in (start_i - len_i / t, end_i); scan only that window.
    by_start = np.argsort(starts, kind="stable")
    sorted_starts = starts[by_start]

    alive = np.ones(n, dtype=bool)
    kept = []
    for i in range(n):
        if not alive[i]:
            continue
        kept.append(ordered[i])
        # the window only pays off for thresholds well above zero
        if threshold > 1e-6:
            reach = lengths[i] / threshold
            lo = np.searchsorted(sorted_starts, starts[i] - reach * (1.0 + 1e-9) - 1e-12, side="left")
            hi = np.searchsorted(sorted_starts, ends[i], side="right")
            rest = by_start[lo:hi]
        else:
            rest = by_start
        rest = rest[(rest > i) & alive[rest]]
        if class_aware:
            rest = rest[classes[rest] == classes[i]]
        if rest.size == 0:
            continue
        inter = np.maximum(np.minimum(ends[i], ends[rest]) - np.maximum(starts[i], starts[rest]), 0.0)
        union = lengths[i] + lengths[rest] - inter
        overlap = np.zeros_like(inter)
        np.divide(inter, union, out=overlap, where=inter > 0.0)
        alive[rest[overlap > threshold]] = False
    return kept
