"""Seeded synthetic corpora of actionness / class-score tracks with ground truth.

Instances are snippet-aligned and pairwise separated by at least
``min_gap_snippets`` snippets. The clean actionness is 1 inside instances and
0 outside, optionally softened by a linear ramp ``boundary_blur`` snippets
wide centred on each boundary; Gaussian noise is added afterwards.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .detection import GroundTruthInstance, SnippetScoreTrack
from .formats import Corpus, Video
from .intervals import TemporalInterval
from .proposals import ActionnessTrack


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_videos: int = 200
    num_classes: int = 5
    video_duration_range: tuple[float, float] = (60.0, 240.0)
    instance_duration_log_range: tuple[float, float] = (1.0, 40.0)
    instances_per_video_range: tuple[int, int] = (1, 6)
    noise_sigma: float = 0.0
    boundary_blur: float = 0.0
    snippet_stride: float = 0.5
    min_gap_snippets: int = 2
    # probability mass of the dominant entry before noise
    class_confidence: float = 0.75

    def __post_init__(self) -> None:
        for name in ("video_duration_range", "instance_duration_log_range", "instances_per_video_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be ordered, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))
        if self.num_videos < 0 or self.num_classes < 1:
            raise ValueError("num_videos >= 0 and num_classes >= 1 required")
        if not self.snippet_stride > 0 or self.video_duration_range[0] <= 0:
            raise ValueError("snippet_stride and video durations must be > 0")
        if self.instance_duration_log_range[0] <= 0:
            raise ValueError("instance durations must be > 0")
        if self.instance_duration_log_range[0] > self.video_duration_range[0]:
            raise ValueError("minimum instance duration exceeds the shortest video")
        if self.instances_per_video_range[0] < 0:
            raise ValueError("instances_per_video_range must be non-negative")
        if self.noise_sigma < 0 or self.boundary_blur < 0 or self.min_gap_snippets < 0:
            raise ValueError("noise_sigma, boundary_blur and min_gap_snippets must be >= 0")
        if not 0.0 < self.class_confidence <= 1.0:
            raise ValueError("class_confidence must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SynthConfig":
        fields = cls.__dataclass_fields__
        unknown = set(doc) - set(fields)
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()})


def _place_instances(rng: np.random.Generator, n_snippets: int, lengths: list[int], min_gap: int) -> list[int]:
    """Random start indices for instances of ``lengths`` in this order, separated by ``min_gap``."""
    m = len(lengths)
    slack = n_snippets - sum(lengths) - min_gap * (m - 1)
    # split the slack into m + 1 non-negative gaps
    cuts = np.sort(rng.integers(0, slack + 1, size=m))
    gaps = np.diff(np.concatenate(([0], cuts)))
    starts, pos = [], 0
    for k, length in enumerate(lengths):
        pos += int(gaps[k]) + (min_gap if k else 0)
        starts.append(pos)
        pos += length
    return starts


def _ramp(n: int, segments: list[tuple[int, int]], blur: float) -> tuple[np.ndarray, np.ndarray]:
    """Clean actionness and index of the dominating instance (-1 for none) per snippet."""
    mid = np.arange(n) + 0.5
    best = np.zeros(n)
    owner = np.full(n, -1)
    for k, (a, b) in enumerate(segments):
        signed = np.minimum(mid - a, b - mid)
        if blur > 0:
            val = np.clip(0.5 + signed / blur, 0.0, 1.0)
        else:
            val = (signed > 0).astype(np.float64)
        take = val > best
        best[take] = val[take]
        owner[take] = k
    return best, owner


def synthesize_video(config: SynthConfig, index: int) -> Video:
    rng = np.random.default_rng([config.seed, index])
    stride = config.snippet_stride
    vid = f"video_{index:05d}"
    duration = rng.uniform(*config.video_duration_range)
    n = max(1, int(round(duration / stride)))

    m = int(rng.integers(config.instances_per_video_range[0], config.instances_per_video_range[1] + 1))
    lo, hi = (math.log(d) for d in config.instance_duration_log_range)
    lengths = [max(1, int(round(math.exp(rng.uniform(lo, hi)) / stride))) for _ in range(m)]
    classes = [int(c) for c in rng.integers(0, config.num_classes, size=m)]
    # drop instances that do not fit
    while lengths and sum(lengths) + config.min_gap_snippets * (len(lengths) - 1) > n:
        lengths.pop()
        classes.pop()
    starts = _place_instances(rng, n, lengths, config.min_gap_snippets) if lengths else []
    segments = [(s, s + length) for s, length in zip(starts, lengths)]

    clean, owner = _ramp(n, segments, config.boundary_blur)
    sigma = config.noise_sigma
    actionness = clean + (rng.normal(0.0, sigma, n) if sigma > 0 else 0.0)
    actionness = np.clip(actionness, 0.0, 1.0)

    k1 = config.num_classes + 1
    conf = config.class_confidence
    base = np.full(k1, (1.0 - conf) / k1)
    outside = base.copy()
    outside[-1] += conf
    inside = np.zeros((n, k1))
    for k, c in enumerate(classes):
        inside[owner == k] = base
        inside[owner == k, c] += conf
    inside[owner < 0] = outside
    probs = clean[:, None] * inside + (1.0 - clean[:, None]) * outside
    if sigma > 0:
        probs = np.clip(probs + rng.normal(0.0, sigma, probs.shape), 1e-6, None)
    probs = probs / probs.sum(axis=1, keepdims=True)

    gts = [
        GroundTruthInstance(TemporalInterval(a * stride, b * stride), c, vid)
        for (a, b), c in sorted(zip(segments, classes))
    ]
    return Video(ActionnessTrack(vid, stride, actionness), SnippetScoreTrack(vid, stride, probs), gts)


def synthesize(config: SynthConfig) -> Corpus:
    """Deterministic corpus for ``config``; each video depends only on (seed, index)."""
    corpus = Corpus()
    for i in range(config.num_videos):
        video = synthesize_video(config, i)
        corpus.videos[video.video_id] = video
    return corpus
