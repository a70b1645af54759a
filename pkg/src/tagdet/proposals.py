"""Class-agnostic temporal proposals.

Temporal actionness grouping (TAG) thresholds an actionness sequence into
fragments and grows each fragment forward by absorbing succeeding fragments
while the share of low-actionness snippets stays within a tolerance. Running
this over a grid of (threshold, tolerance) pairs and pruning near duplicates
gives the proposal set. A multi-scale sliding-window generator is provided as
the dense baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .intervals import ScoredInterval, TemporalInterval, nms

def _even_grid(lo: float, hi: float, step: float) -> tuple[float, ...]:
    n = int(round((hi - lo) / step))
    return tuple(round(lo + k * step, 10) for k in range(n + 1))


DEFAULT_TAUS = _even_grid(0.1, 0.9, 0.1)
DEFAULT_GAMMAS = _even_grid(0.0, 0.9, 0.1)


@dataclass(frozen=True)
class ActionnessTrack:
    video_id: str
    snippet_stride: float
    scores: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if scores.size < 1:
            raise ValueError(f"{self.video_id}: actionness track is empty")
        if not self.snippet_stride > 0:
            raise ValueError(f"{self.video_id}: snippet stride must be > 0")
        if not np.all((scores >= 0.0) & (scores <= 1.0)):
            raise ValueError(f"{self.video_id}: actionness scores must lie in [0, 1]")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "snippet_stride", float(self.snippet_stride))

    def __len__(self) -> int:
        return int(self.scores.size)

    @property
    def duration(self) -> float:
        return len(self) * self.snippet_stride

    def to_interval(self, first: int, last: int) -> TemporalInterval:
        """Time span of snippets ``first..last`` (inclusive)."""
        return TemporalInterval(first * self.snippet_stride, (last + 1) * self.snippet_stride)


class Fragment(NamedTuple):
    first: int
    last: int  # inclusive


@dataclass(frozen=True)
class TagConfig:
    tau_grid: Sequence[float] = DEFAULT_TAUS
    gamma_grid: Sequence[float] = DEFAULT_GAMMAS
    dedup_iou: float = 0.95

    def __post_init__(self) -> None:
        for name in ("tau_grid", "gamma_grid"):
            grid = tuple(float(v) for v in getattr(self, name))
            if not grid:
                raise ValueError(f"{name} must be non-empty")
            if any(not 0.0 <= v <= 1.0 for v in grid):
                raise ValueError(f"{name} values must lie in [0, 1]")
            if list(grid) != sorted(grid):
                raise ValueError(f"{name} must be sorted")
            object.__setattr__(self, name, grid)
        if not 0.0 <= self.dedup_iou <= 1.0:
            raise ValueError("dedup_iou must lie in [0, 1]")


def extract_fragments(track: ActionnessTrack, tau: float) -> list[Fragment]:
    """Maximal runs of consecutive snippets with actionness >= ``tau``."""
    fg = np.concatenate(([False], track.scores >= tau, [False]))
    edges = np.flatnonzero(fg[1:] != fg[:-1])
    return [Fragment(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def grow_from_fragment(
    fragments: Sequence[Fragment],
    start: int,
    tau: float,
    gamma: float,
    track: ActionnessTrack,
) -> Fragment:
    """Grow ``fragments[start]`` forward by absorbing succeeding fragments.

    An extension to the next fragment is committed only if the fraction of
    snippets below ``tau`` in the extended region is at most ``gamma``; growth
    stops at the first rejected extension.
    """
    low = track.scores < tau
    first = fragments[start].first
    end = fragments[start].last
    for frag in fragments[start + 1:]:
        length = frag.last - first + 1
        frac = int(np.count_nonzero(low[first:frag.last + 1])) / length
        if frac > gamma:
            break
        end = frag.last
    return Fragment(first, end)


def _grow_table(track: ActionnessTrack, tau: float, gammas: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """First snippet of every fragment and, per gamma, the last snippet of its grown region.

    For start fragment ``i`` the low fraction of region ``i..j`` is computed
    for every later ``j``; its running maximum along ``j`` is the smallest
    tolerance admitting that end, so each gamma selects a prefix of ends.
    """
    frags = extract_fragments(track, tau)
    n = len(frags)
    if not n:
        return np.empty(0, dtype=np.int64), np.empty((len(gammas), 0), dtype=np.int64)
    firsts = np.array([f.first for f in frags], dtype=np.int64)
    lasts = np.array([f.last for f in frags], dtype=np.int64)
    low_prefix = np.concatenate(([0], np.cumsum(track.scores < tau)))
    low_at_last = low_prefix[lasts + 1]
    gamma_arr = np.asarray(gammas, dtype=np.float64)
    ends = np.empty((len(gammas), n), dtype=np.int64)
    for i in range(n):
        first = firsts[i]
        frac = (low_at_last[i:] - low_prefix[first]) / (lasts[i:] - first + 1)
        need = np.maximum.accumulate(frac)
        ends[:, i] = lasts[i + np.searchsorted(need, gamma_arr, side="right") - 1]
    return firsts, ends


def grow_all(track: ActionnessTrack, tau: float, gammas: Sequence[float]) -> dict[float, list[Fragment]]:
    """Regions grown from every fragment at ``tau``, for each tolerance in ``gammas``.

    Same result as :func:`grow_from_fragment` applied to every start fragment
    and gamma, computed for all of them at once.
    """
    firsts, ends = _grow_table(track, tau, gammas)
    return {
        g: [Fragment(int(a), int(b)) for a, b in zip(firsts, ends[gi])] for gi, g in enumerate(gammas)
    }


def tag_regions(track: ActionnessTrack, config: TagConfig = TagConfig()) -> list[Fragment]:
    """Distinct grown regions (snippet index ranges) over the whole grid, before dedup."""
    n = len(track)
    keys = [np.empty(0, dtype=np.int64)]
    for tau in config.tau_grid:
        firsts, ends = _grow_table(track, tau, config.gamma_grid)
        keys.append((firsts[None, :] * n + ends).ravel())
    unique = np.unique(np.concatenate(keys))
    return [Fragment(int(k // n), int(k % n)) for k in unique]


def tag_propose(track: ActionnessTrack, config: TagConfig = TagConfig()) -> list[TemporalInterval]:
    """TAG proposals for one track, deduplicated and sorted by start time.

    Dedup is class-agnostic NMS at ``config.dedup_iou``, ranking regions by
    their mean actionness.
    """
    regions = tag_regions(track, config)
    if not regions:
        return []
    csum = np.concatenate(([0.0], np.cumsum(track.scores)))
    scored = [
        ScoredInterval(
            track.to_interval(r.first, r.last),
            float((csum[r.last + 1] - csum[r.first]) / (r.last - r.first + 1)),
        )
        for r in regions
    ]
    kept = nms(scored, config.dedup_iou)
    return sorted(it.interval for it in kept)


_EPS = 1e-9


def sliding_windows(
    total_duration: float,
    num_scales: int = 20,
    base_length: float = 0.3,
    step_ratio: float = 0.4,
    scale_factor: float = 2.0,
) -> list[TemporalInterval]:
    """Multi-scale sliding windows over ``[0, total_duration]``.

    Scale ``k`` uses windows of ``base_length * scale_factor**k`` seconds
    stepped by ``step_ratio`` of their length; one extra window flush with the
    end is added when the regular placement does not already end there.
    """
    if not total_duration > 0:
        raise ValueError(f"total_duration must be > 0, got {total_duration}")
    if num_scales < 0 or not base_length > 0 or not step_ratio > 0:
        raise ValueError("num_scales >= 0, base_length > 0 and step_ratio > 0 required")
    windows = []
    for k in range(num_scales):
        length = base_length * scale_factor**k
        if length > total_duration + _EPS:
            continue
        step = step_ratio * length
        i = 0
        last_start = None
        while i * step + length <= total_duration + _EPS:
            last_start = i * step
            windows.append(TemporalInterval(last_start, min(last_start + length, total_duration)))
            i += 1
        flush = max(0.0, total_duration - length)
        if last_start is None or abs(flush - last_start) > _EPS:
            windows.append(TemporalInterval(flush, total_duration))
    return windows
