"""JSON Lines readers/writers for score tracks, ground truth, proposals and detections.

Every reader validates records and raises :class:`SchemaError` carrying the
file and line of the offending record. Floats are written with ``repr`` so
they re-parse to the identical double.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .detection import Detection, GroundTruthInstance, SnippetScoreTrack
from .intervals import TemporalInterval
from .proposals import ActionnessTrack

ACTIONNESS_FILE = "actionness.jsonl"
SCORES_FILE = "scores.jsonl"
GT_FILE = "gt.jsonl"


class SchemaError(ValueError):
    def __init__(self, path: os.PathLike | str, line: int, message: str):
        self.path = str(path)
        self.line = line
        self.message = message
        super().__init__(f"{self.path}:{line}: {message}")


def dumps(record: Mapping[str, Any]) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


def write_jsonl(path: os.PathLike | str, records: Iterable[Mapping[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec))
            fh.write("\n")


def read_jsonl(path: os.PathLike | str) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise SchemaError(path, lineno, "record must be a JSON object")
            yield lineno, rec


def sha256_file(path: os.PathLike | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- field helpers -------------------------------------------------------------


def _field(rec: dict, key: str, path, lineno: int):
    if key not in rec:
        raise SchemaError(path, lineno, f"missing field {key!r}")
    return rec[key]


def _number(value, key: str, path, lineno: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(path, lineno, f"field {key!r} must be a finite number")
    return float(value)


def _integer(value, key: str, path, lineno: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, lineno, f"field {key!r} must be an integer")
    return value


def _video_id(rec: dict, path, lineno: int) -> str:
    vid = _field(rec, "video_id", path, lineno)
    if not isinstance(vid, str) or not vid:
        raise SchemaError(path, lineno, "field 'video_id' must be a non-empty string")
    return vid


def _interval(rec: dict, path, lineno: int) -> TemporalInterval:
    start = _number(_field(rec, "start", path, lineno), "start", path, lineno)
    end = _number(_field(rec, "end", path, lineno), "end", path, lineno)
    try:
        return TemporalInterval(start, end)
    except ValueError as exc:
        raise SchemaError(path, lineno, str(exc)) from None


def _number_array(value, key: str, path, lineno: int, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError(path, lineno, f"field {key!r} must be a numeric array") from None
    if arr.ndim != ndim or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise SchemaError(path, lineno, f"field {key!r} must be a non-empty finite {ndim}-d array")
    return arr


# -- score tracks -----------------------------------------------------------------


def actionness_record(track: ActionnessTrack) -> dict:
    return {"video_id": track.video_id, "stride_sec": track.snippet_stride, "actionness": track.scores.tolist()}


def scores_record(track: SnippetScoreTrack) -> dict:
    return {"video_id": track.video_id, "stride_sec": track.snippet_stride, "probs": track.probs.tolist()}


def _unique(seen: set, vid: str, path, lineno: int) -> None:
    if vid in seen:
        raise SchemaError(path, lineno, f"duplicate video_id {vid!r}")
    seen.add(vid)


def read_actionness(path: os.PathLike | str) -> dict[str, ActionnessTrack]:
    out: dict[str, ActionnessTrack] = {}
    seen: set = set()
    for lineno, rec in read_jsonl(path):
        vid = _video_id(rec, path, lineno)
        _unique(seen, vid, path, lineno)
        stride = _number(_field(rec, "stride_sec", path, lineno), "stride_sec", path, lineno)
        scores = _number_array(_field(rec, "actionness", path, lineno), "actionness", path, lineno, 1)
        try:
            out[vid] = ActionnessTrack(vid, stride, scores)
        except ValueError as exc:
            raise SchemaError(path, lineno, str(exc)) from None
    return out


def read_scores(path: os.PathLike | str) -> dict[str, SnippetScoreTrack]:
    out: dict[str, SnippetScoreTrack] = {}
    seen: set = set()
    for lineno, rec in read_jsonl(path):
        vid = _video_id(rec, path, lineno)
        _unique(seen, vid, path, lineno)
        stride = _number(_field(rec, "stride_sec", path, lineno), "stride_sec", path, lineno)
        probs = _number_array(_field(rec, "probs", path, lineno), "probs", path, lineno, 2)
        try:
            out[vid] = SnippetScoreTrack(vid, stride, probs)
        except ValueError as exc:
            raise SchemaError(path, lineno, str(exc)) from None
    return out


# -- ground truth ------------------------------------------------------------------


def gt_records(gts: Sequence[GroundTruthInstance], video_ids: Sequence[str]) -> list[dict]:
    by_video: dict[str, list] = {vid: [] for vid in video_ids}
    for g in gts:
        by_video.setdefault(g.video_id, []).append(g)
    return [
        {
            "video_id": vid,
            "instances": [
                {"start": g.interval.start, "end": g.interval.end, "class_id": g.class_id}
                for g in sorted(items, key=lambda g: (g.interval.start, g.interval.end))
            ],
        }
        for vid, items in by_video.items()
    ]


def read_gt(path: os.PathLike | str) -> dict[str, list[GroundTruthInstance]]:
    out: dict[str, list[GroundTruthInstance]] = {}
    seen: set = set()
    for lineno, rec in read_jsonl(path):
        vid = _video_id(rec, path, lineno)
        _unique(seen, vid, path, lineno)
        instances = _field(rec, "instances", path, lineno)
        if not isinstance(instances, list):
            raise SchemaError(path, lineno, "field 'instances' must be a list")
        items = []
        for inst in instances:
            if not isinstance(inst, dict):
                raise SchemaError(path, lineno, "instances must be objects")
            cls = _integer(_field(inst, "class_id", path, lineno), "class_id", path, lineno)
            if cls < 0:
                raise SchemaError(path, lineno, "class_id must be >= 0")
            items.append(GroundTruthInstance(_interval(inst, path, lineno), cls, vid))
        out[vid] = items
    return out


# -- proposals / detections -----------------------------------------------------


def proposal_records(proposals: Mapping[str, Sequence[TemporalInterval]], scores: Mapping[str, Sequence[float]] | None = None) -> Iterator[dict]:
    for vid in sorted(proposals):
        for k, p in enumerate(proposals[vid]):
            score = 1.0 if scores is None else float(scores[vid][k])
            yield {"video_id": vid, "start": p.start, "end": p.end, "score": score}


def read_proposals(path: os.PathLike | str) -> dict[str, list[TemporalInterval]]:
    out: dict[str, list[TemporalInterval]] = {}
    for lineno, rec in read_jsonl(path):
        vid = _video_id(rec, path, lineno)
        _number(_field(rec, "score", path, lineno), "score", path, lineno)
        out.setdefault(vid, []).append(_interval(rec, path, lineno))
    return out


def detection_record(d: Detection) -> dict:
    return {
        "video_id": d.video_id,
        "start": d.interval.start,
        "end": d.interval.end,
        "score": d.s_det,
        "class_id": d.class_id,
        "p_a": d.p_a,
        "s_c": d.s_c if math.isfinite(d.s_c) else None,
    }


def read_detections(path: os.PathLike | str) -> list[Detection]:
    out = []
    for lineno, rec in read_jsonl(path):
        vid = _video_id(rec, path, lineno)
        iv = _interval(rec, path, lineno)
        score = _number(_field(rec, "score", path, lineno), "score", path, lineno)
        cls = _integer(_field(rec, "class_id", path, lineno), "class_id", path, lineno)
        p_a = _number(_field(rec, "p_a", path, lineno), "p_a", path, lineno)
        raw_sc = _field(rec, "s_c", path, lineno)
        s_c = -math.inf if raw_sc is None else _number(raw_sc, "s_c", path, lineno)
        try:
            out.append(Detection(iv, cls, p_a, s_c, score, vid))
        except ValueError as exc:
            raise SchemaError(path, lineno, str(exc)) from None
    return out


# -- corpus ------------------------------------------------------------------------


@dataclass
class Video:
    actionness: ActionnessTrack
    scores: SnippetScoreTrack
    gts: list[GroundTruthInstance] = field(default_factory=list)

    @property
    def video_id(self) -> str:
        return self.actionness.video_id


@dataclass
class Corpus:
    videos: dict[str, Video] = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        ks = {v.scores.num_classes for v in self.videos.values()}
        return ks.pop() if len(ks) == 1 else max(ks, default=0)

    def gts(self, video_ids: Iterable[str] | None = None) -> list[GroundTruthInstance]:
        ids = sorted(self.videos) if video_ids is None else video_ids
        return [g for vid in ids for g in self.videos[vid].gts]

    def subset(self, video_ids: Iterable[str]) -> "Corpus":
        return Corpus({vid: self.videos[vid] for vid in video_ids})


def save_corpus(corpus: Corpus, directory: os.PathLike | str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = sorted(corpus.videos)
    write_jsonl(directory / ACTIONNESS_FILE, (actionness_record(corpus.videos[v].actionness) for v in ids))
    write_jsonl(directory / SCORES_FILE, (scores_record(corpus.videos[v].scores) for v in ids))
    write_jsonl(directory / GT_FILE, gt_records(corpus.gts(ids), ids))


def load_corpus(directory: os.PathLike | str) -> Corpus:
    directory = Path(directory)
    paths = [directory / ACTIONNESS_FILE, directory / SCORES_FILE, directory / GT_FILE]
    for p in paths:
        if not p.exists():
            raise SchemaError(p, 0, "file not found")
    actionness = read_actionness(paths[0])
    scores = read_scores(paths[1])
    gts = read_gt(paths[2])
    if set(actionness) != set(scores):
        missing = sorted(set(actionness) ^ set(scores))
        raise SchemaError(paths[1], 0, f"actionness and class-score files cover different videos: {missing[:5]}")
    ks = {t.num_classes for t in scores.values()}
    if len(ks) > 1:
        raise SchemaError(paths[1], 0, f"inconsistent class counts across videos: {sorted(ks)}")
    corpus = Corpus()
    for vid in sorted(actionness):
        a, s = actionness[vid], scores[vid]
        if a.snippet_stride != s.snippet_stride or len(a) != len(s):
            raise SchemaError(paths[1], 0, f"{vid}: actionness and class-score tracks are not aligned")
        items = gts.get(vid, [])
        for g in items:
            if g.class_id >= s.num_classes:
                raise SchemaError(paths[2], 0, f"{vid}: class_id {g.class_id} >= K={s.num_classes}")
        corpus.videos[vid] = Video(a, s, list(items))
    unknown = sorted(set(gts) - set(actionness))
    if unknown:
        raise SchemaError(paths[2], 0, f"ground truth for unknown videos: {unknown[:5]}")
    return corpus
