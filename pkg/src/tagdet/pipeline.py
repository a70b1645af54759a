"""End-to-end workflow: propose, train completeness filters, detect, evaluate.

Also runs the classification-module ablation (one stage vs. cascade with
duration heuristics vs. cascade with completeness filters).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .detection import (
    NMS_PRESETS,
    Detection,
    DurationHistogram,
    completeness_training_set,
    detect,
    detect_one_stage,
    detection_sort_key,
    one_stage_training_set,
)
from .evaluation import (
    ANET_AVERAGE_GRID,
    ANET_GRID,
    AR_GRID,
    THUMOS_GRID,
    EvalReport,
    EvalThresholds,
    average_recall,
    format_table,
    mean_ap,
)
from .formats import (
    ACTIONNESS_FILE,
    GT_FILE,
    SCORES_FILE,
    Corpus,
    detection_record,
    load_corpus,
    proposal_records,
    sha256_file,
    write_jsonl,
)
from .intervals import TemporalInterval
from .proposals import TagConfig, sliding_windows, tag_propose
from .svm import LinearModel, MissingTrainingDataWarning, SvmConfig, models_to_json, train_completeness_filters
from .synth import SynthConfig

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
SYNTH_CONFIG_FILE = "synth.json"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SlidingWindowParams:
    num_scales: int = 20
    base_length: float = 0.3
    step_ratio: float = 0.4
    scale_factor: float = 2.0


@dataclass(frozen=True)
class PipelineConfig:
    tag: TagConfig = TagConfig()
    svm: SvmConfig = SvmConfig()
    preset: str = "anet"
    nms_iou: Optional[float] = None
    context_ratio: float = 0.25
    pooling: str = "mean"
    h1_alpha: float = 0.7
    h2_bins: int = 20
    sliding: SlidingWindowParams = SlidingWindowParams()
    synth: SynthConfig = SynthConfig()

    def __post_init__(self) -> None:
        if self.preset not in NMS_PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; expected one of {sorted(NMS_PRESETS)}")
        if self.nms_iou is not None and not 0.0 <= self.nms_iou <= 1.0:
            raise ConfigError("nms_iou must lie in [0, 1]")
        if self.pooling not in ("mean", "max"):
            raise ConfigError(f"unknown pooling {self.pooling!r}")
        if self.context_ratio < 0:
            raise ConfigError("context_ratio must be >= 0")
        if self.h2_bins < 1:
            raise ConfigError("h2_bins must be >= 1")

    @property
    def final_nms_iou(self) -> float:
        return NMS_PRESETS[self.preset] if self.nms_iou is None else self.nms_iou

    @property
    def report_grid(self) -> tuple[float, ...]:
        return THUMOS_GRID if self.preset == "thumos" else ANET_GRID

    def to_dict(self) -> dict:
        return {
            "tag": {
                "tau_grid": list(self.tag.tau_grid),
                "gamma_grid": list(self.tag.gamma_grid),
                "dedup_iou": self.tag.dedup_iou,
            },
            "svm": asdict(self.svm),
            "preset": self.preset,
            "nms_iou": self.nms_iou,
            "context_ratio": self.context_ratio,
            "pooling": self.pooling,
            "h1_alpha": self.h1_alpha,
            "h2_bins": self.h2_bins,
            "sliding": asdict(self.sliding),
            "synth": self.synth.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PipelineConfig":
        if not isinstance(doc, Mapping):
            raise ConfigError("config must be a JSON object")
        known = {"tag", "svm", "preset", "nms_iou", "context_ratio", "pooling", "h1_alpha", "h2_bins", "sliding", "synth"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kwargs = {k: doc[k] for k in known - {"tag", "svm", "sliding", "synth"} if k in doc}
            if "tag" in doc:
                kwargs["tag"] = TagConfig(**doc["tag"])
            if "svm" in doc:
                kwargs["svm"] = SvmConfig(**doc["svm"])
            if "sliding" in doc:
                kwargs["sliding"] = SlidingWindowParams(**doc["sliding"])
            if "synth" in doc:
                kwargs["synth"] = SynthConfig.from_dict(doc["synth"])
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def with_seed(self, seed: int) -> "PipelineConfig":
        doc = self.to_dict()
        doc["svm"]["seed"] = seed
        doc["synth"]["seed"] = seed
        return PipelineConfig.from_dict(doc)


def load_config(path: Optional[os.PathLike | str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return PipelineConfig.from_dict(doc)


# -- stages --------------------------------------------------------------------


def split_videos(video_ids: Sequence[str]) -> tuple[list[str], list[str]]:
    """Train / eval split by the parity of each id's SHA-256 digest."""
    train, evaluation = [], []
    for vid in sorted(video_ids):
        parity = hashlib.sha256(vid.encode("utf-8")).digest()[-1] & 1
        (train if parity == 0 else evaluation).append(vid)
    return train, evaluation


def propose_corpus(corpus: Corpus, config: TagConfig) -> dict[str, list[TemporalInterval]]:
    return {vid: tag_propose(v.actionness, config) for vid, v in sorted(corpus.videos.items())}


def sliding_corpus(corpus: Corpus, params: SlidingWindowParams) -> dict[str, list[TemporalInterval]]:
    return {
        vid: sliding_windows(v.actionness.duration, **asdict(params)) for vid, v in sorted(corpus.videos.items())
    }


def _stack(per_class: dict[int, tuple[list, list]], sets: Sequence[dict]) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    for part in sets:
        for c, (xs, ys) in part.items():
            acc = per_class.setdefault(c, ([], []))
            acc[0].extend(xs)
            acc[1].extend(ys)
    return {
        c: (np.array(xs, dtype=np.float64).reshape(len(xs), -1), np.array(ys, dtype=np.float64))
        for c, (xs, ys) in sorted(per_class.items())
    }


def train_models(
    corpus: Corpus,
    proposals: Mapping[str, Sequence[TemporalInterval]],
    config: PipelineConfig,
    mode: str = "cascade",
    skipped: Optional[list[int]] = None,
) -> list[LinearModel]:
    """Completeness filters (``cascade``) or one-vs-rest region classifiers (``one_stage``)."""
    per_video = []
    for vid, video in sorted(corpus.videos.items()):
        props = proposals.get(vid, [])
        if mode == "cascade":
            if video.gts:
                per_video.append(completeness_training_set(video.scores, props, video.gts, config.context_ratio))
        elif mode == "one_stage":
            per_video.append(one_stage_training_set(video.scores, props, video.gts, config.pooling))
        else:
            raise ValueError(f"unknown training mode {mode!r}")
    data = _stack({c: ([], []) for c in range(corpus.num_classes)}, per_video)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MissingTrainingDataWarning)
        models = train_completeness_filters(data, config.svm)
    trained = {m.class_id for m in models}
    missing = sorted(set(data) - trained)
    for w in caught:
        log.warning("%s", w.message)
    if skipped is not None:
        skipped.extend(missing)
    return models


def duration_histogram(corpus: Corpus, bins: int) -> Optional[DurationHistogram]:
    durations = [g.interval.duration() for g in corpus.gts()]
    return DurationHistogram.from_durations(durations, bins=bins) if durations else None


def detect_corpus(
    corpus: Corpus,
    proposals: Mapping[str, Sequence[TemporalInterval]],
    models: Sequence[LinearModel],
    config: PipelineConfig,
    scoring: str = "completeness",
    histogram: Optional[DurationHistogram] = None,
    diagnostics: Optional[dict] = None,
) -> list[Detection]:
    out: list[Detection] = []
    for vid, video in sorted(corpus.videos.items()):
        props = proposals.get(vid, [])
        if scoring == "one_stage":
            dets = detect_one_stage(video.scores, props, models, config.final_nms_iou, config.pooling)
        else:
            dets = detect(
                video.actionness,
                video.scores,
                props,
                models,
                config.final_nms_iou,
                scoring=scoring,
                context_ratio=config.context_ratio,
                pooling=config.pooling,
                alpha=config.h1_alpha,
                duration_histogram=histogram,
                diagnostics=diagnostics,
            )
        out.extend(dets)
    return sorted(out, key=lambda d: (d.video_id,) + detection_sort_key(d))


def evaluate(
    corpus: Corpus,
    detections: Sequence[Detection],
    proposals: Optional[Mapping[str, Sequence[TemporalInterval]]],
    config: PipelineConfig,
) -> dict[str, EvalReport]:
    gts = corpus.gts()
    classes = sorted({g.class_id for g in gts})
    reports = {
        "detection": mean_ap(detections, gts, EvalThresholds(ANET_AVERAGE_GRID), classes),
        "detection_preset": mean_ap(detections, gts, EvalThresholds(config.report_grid), classes),
    }
    if proposals is not None:
        reports["proposals"] = average_recall(proposals, gts, EvalThresholds(AR_GRID))
    return reports


def reports_to_json(reports: Mapping[str, EvalReport]) -> str:
    return json.dumps({k: r.to_dict() for k, r in reports.items()}, indent=2) + "\n"


def reports_to_text(reports: Mapping[str, EvalReport]) -> str:
    parts = []
    for name, rep in reports.items():
        parts.append(f"[{name}]\n" + rep.to_table(label=rep.metric))
    return "\n".join(parts)


# -- full run ------------------------------------------------------------------


@dataclass
class RunResult:
    out_dir: Path
    reports: dict[str, EvalReport]
    manifest: dict
    detections: list[Detection] = field(default_factory=list)


class _Outputs:
    """Tracks files written in a run so a failed run leaves nothing behind."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.created_dir = not out_dir.exists()
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.paths.append(p)
        return p

    def cleanup(self) -> None:
        for p in self.paths:
            p.unlink(missing_ok=True)
        if self.created_dir and self.out_dir.exists() and not any(self.out_dir.iterdir()):
            self.out_dir.rmdir()


def corpus_fingerprint(corpus_dir: Path) -> dict:
    files = {name: sha256_file(corpus_dir / name) for name in (ACTIONNESS_FILE, SCORES_FILE, GT_FILE)}
    doc = {"path": str(corpus_dir.resolve()), "files": files}
    synth = corpus_dir / SYNTH_CONFIG_FILE
    if synth.exists():
        doc["synth"] = json.loads(synth.read_text(encoding="utf-8"))
    return doc


def run_pipeline(
    corpus_dir: os.PathLike | str,
    config: PipelineConfig,
    out_dir: os.PathLike | str,
) -> RunResult:
    """Propose on every video, train on the train split, detect and evaluate on the eval split.

    Writes ``proposals.jsonl``, ``models.json``, ``detections.jsonl``,
    ``report.json``, ``report.txt`` and ``manifest.json`` into ``out_dir``.
    """
    corpus_dir, out_dir = Path(corpus_dir), Path(out_dir)
    outputs = _Outputs(out_dir)
    timings: dict[str, float] = {}

    def timed(name: str, fn, *args, **kwargs):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        timings[name] = round(time.perf_counter() - t0, 6)
        return result

    try:
        corpus = timed("load", load_corpus, corpus_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        train_ids, eval_ids = split_videos(list(corpus.videos))
        train, held_out = corpus.subset(train_ids), corpus.subset(eval_ids)

        proposals = timed("propose", propose_corpus, corpus, config.tag)
        write_jsonl(outputs.path("proposals.jsonl"), proposal_records(proposals))

        skipped: list[int] = []
        models = timed("train", train_models, train, proposals, config, "cascade", skipped)
        outputs.path("models.json").write_text(models_to_json(models, corpus.num_classes), encoding="utf-8")

        diagnostics: dict[str, int] = {}
        detections = timed("detect", detect_corpus, held_out, proposals, models, config, "completeness", None, diagnostics)
        write_jsonl(outputs.path("detections.jsonl"), (detection_record(d) for d in detections))

        eval_props = {vid: proposals[vid] for vid in eval_ids}
        reports = timed("evaluate", evaluate, held_out, detections, eval_props, config)
        if not held_out.gts():
            reports["detection"].warnings.append("evaluation split has zero ground-truth instances")
        outputs.path("report.json").write_text(reports_to_json(reports), encoding="utf-8")
        outputs.path("report.txt").write_text(reports_to_text(reports), encoding="utf-8")

        manifest = {
            "version": MANIFEST_VERSION,
            "tool": {"name": "tagdet", "version": __version__},
            "config": config.to_dict(),
            "seed": config.svm.seed,
            "corpus": corpus_fingerprint(corpus_dir),
            "split": {"train": len(train_ids), "eval": len(eval_ids)},
            "skipped_classes": skipped,
            "diagnostics": dict(sorted(diagnostics.items())),
            "timings_sec": timings,
            "outputs": {p.name: sha256_file(p) for p in outputs.paths},
        }
        manifest_path = outputs.path("manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except BaseException:
        outputs.cleanup()
        raise
    return RunResult(out_dir, reports, manifest, detections)


def config_from_manifest(manifest: Mapping) -> tuple[PipelineConfig, Path]:
    if manifest.get("version") != MANIFEST_VERSION:
        raise ConfigError(f"unsupported manifest version {manifest.get('version')!r}")
    config = PipelineConfig.from_dict(manifest["config"])
    return config, Path(manifest["corpus"]["path"])


# -- ablation ------------------------------------------------------------------

ABLATION_ROWS = (
    ("one_stage", "One Stage"),
    ("h1", "Cascade + H1"),
    ("h2", "Cascade + H2"),
    ("completeness", "Cascade + Comp."),
)


def run_ablation(
    corpus: Corpus,
    config: PipelineConfig,
    proposals: Optional[Mapping[str, Sequence[TemporalInterval]]] = None,
) -> dict[str, dict[str, EvalReport]]:
    """Evaluate every classification-module variant on the eval split."""
    train_ids, eval_ids = split_videos(list(corpus.videos))
    train, held_out = corpus.subset(train_ids), corpus.subset(eval_ids)
    if proposals is None:
        proposals = propose_corpus(corpus, config.tag)
    cascade_models = train_models(train, proposals, config, "cascade")
    one_stage_models = train_models(train, proposals, config, "one_stage")
    histogram = duration_histogram(train, config.h2_bins)

    results = {}
    for key, _ in ABLATION_ROWS:
        if key == "one_stage":
            dets = detect_corpus(held_out, proposals, one_stage_models, config, "one_stage")
        elif key == "h2" and histogram is None:
            dets = []
        else:
            dets = detect_corpus(held_out, proposals, cascade_models, config, key, histogram)
        results[key] = evaluate(held_out, dets, None, config)
    return results


def ablation_table(results: Mapping[str, Mapping[str, EvalReport]]) -> str:
    """Rows per module; columns are mAP at each reporting threshold and average mAP."""
    first = next(iter(results.values()))
    grid = list(first["detection_preset"].per_threshold)
    headers = ["Module"] + [f"mAP@{t:g}" for t in grid] + ["avg mAP"]
    rows = []
    for key, label in ABLATION_ROWS:
        if key not in results:
            continue
        rep = results[key]
        rows.append(
            [label]
            + [f"{rep['detection_preset'].per_threshold[t] * 100:.2f}" for t in grid]
            + [f"{rep['detection'].average * 100:.2f}"]
        )
    return format_table(headers, rows)
