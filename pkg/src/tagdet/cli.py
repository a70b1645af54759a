"""Command-line interface.

Exit codes: 0 success, 2 schema error in an input file, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .detection import select_training_samples
from .formats import (
    SchemaError,
    detection_record,
    load_corpus,
    proposal_records,
    read_detections,
    read_proposals,
    save_corpus,
    write_jsonl,
)
from .pipeline import (
    SYNTH_CONFIG_FILE,
    ConfigError,
    PipelineConfig,
    ablation_table,
    config_from_manifest,
    detect_corpus,
    duration_histogram,
    evaluate,
    load_config,
    propose_corpus,
    reports_to_json,
    reports_to_text,
    run_ablation,
    run_pipeline,
    sliding_corpus,
    split_videos,
    train_models,
)
from .svm import models_from_json, models_to_json
from .synth import SynthConfig, synthesize

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_CONFIG = 3

log = logging.getLogger("tagdet")


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="pipeline config (JSON)")
    parser.add_argument("--seed", type=int, default=default, help="overrides synth and SVM seeds")
    parser.add_argument("--preset", choices=["anet", "thumos"], default=default,
                        help="final NMS threshold 0.6 (anet) or 0.2 (thumos)")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tagdet", description=__doc__.splitlines()[0])
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        _global_options(p, suppress=True)
        return p

    p = add("synth", "generate a seeded synthetic corpus")
    p.add_argument("--out", type=Path, required=True, help="corpus directory")
    p.add_argument("--num-videos", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--noise", type=float, help="Gaussian noise sigma")
    p.add_argument("--blur", type=float, help="boundary ramp width in snippets")

    p = add("propose", "generate proposals for every video")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--method", choices=["tag", "sliding"], default="tag")

    p = add("train", "train completeness filters (or one-stage classifiers)")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--proposals", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--mode", choices=["cascade", "one_stage"], default="cascade")
    p.add_argument("--split", choices=["train", "all"], default="train")

    p = add("detect", "run the classification cascade on proposals")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--proposals", type=Path, required=True)
    p.add_argument("--models", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--scoring", choices=["completeness", "h1", "h2", "one_stage"], default="completeness")
    p.add_argument("--split", choices=["eval", "all"], default="eval")

    p = add("eval", "evaluate detections (mAP) and/or proposals (AR)")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--detections", type=Path)
    p.add_argument("--proposals", type=Path)
    p.add_argument("--out", type=Path, required=True, help="report JSON")
    p.add_argument("--text", type=Path, help="also write plain-text tables here")
    p.add_argument("--split", choices=["eval", "all"], default="eval")

    p = add("ablate", "compare one-stage, cascade+H1, cascade+H2 and cascade+completeness")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--proposals", type=Path)

    p = add("run", "full pipeline: propose, train, detect, evaluate")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", type=Path)
    src.add_argument("--manifest", type=Path, help="re-run exactly as recorded in a run manifest")
    p.add_argument("--out", type=Path, required=True)
    return parser


def _config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.preset is not None:
        doc = config.to_dict()
        doc["preset"] = args.preset
        config = PipelineConfig.from_dict(doc)
    return config


def _split_ids(corpus, split: str) -> list[str]:
    train_ids, eval_ids = split_videos(list(corpus.videos))
    return {"train": train_ids, "eval": eval_ids, "all": sorted(corpus.videos)}[split]


def cmd_synth(args, config: PipelineConfig) -> int:
    doc = config.synth.to_dict()
    for key, attr in (("num_videos", "num_videos"), ("num_classes", "classes"), ("noise_sigma", "noise"),
                      ("boundary_blur", "blur")):
        value = getattr(args, attr)
        if value is not None:
            doc[key] = value
    try:
        synth_config = SynthConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    corpus = synthesize(synth_config)
    save_corpus(corpus, args.out)
    (args.out / SYNTH_CONFIG_FILE).write_text(json.dumps(synth_config.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(corpus.videos)} videos, {len(corpus.gts())} instances to {args.out}")
    return EXIT_OK


def cmd_propose(args, config: PipelineConfig) -> int:
    corpus = load_corpus(args.corpus)
    if args.method == "tag":
        proposals = propose_corpus(corpus, config.tag)
    else:
        proposals = sliding_corpus(corpus, config.sliding)
    write_jsonl(args.out, proposal_records(proposals))
    total = sum(len(v) for v in proposals.values())
    print(f"wrote {total} proposals for {len(proposals)} videos to {args.out}")
    return EXIT_OK


def cmd_train(args, config: PipelineConfig) -> int:
    corpus = load_corpus(args.corpus)
    proposals = read_proposals(args.proposals)
    subset = corpus.subset(_split_ids(corpus, args.split))
    skipped: list[int] = []
    models = train_models(subset, proposals, config, args.mode, skipped)
    kind = "completeness" if args.mode == "cascade" else "one_stage"
    args.out.write_text(models_to_json(models, corpus.num_classes, kind=kind), encoding="utf-8")
    npos = sum(len(select_training_samples(proposals.get(v, []), subset.videos[v].gts, args.mode)[0])
               for v in subset.videos)
    print(f"trained {len(models)} models ({npos} positive proposals); skipped classes: {skipped or 'none'}")
    return EXIT_OK


def cmd_detect(args, config: PipelineConfig) -> int:
    corpus = load_corpus(args.corpus)
    proposals = read_proposals(args.proposals)
    models = []
    if args.scoring in ("completeness", "one_stage"):
        if args.models is None:
            raise ConfigError(f"--models is required for {args.scoring} scoring")
        try:
            bundle = models_from_json(args.models.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise SchemaError(args.models, 1, str(exc)) from None
        expected = "one_stage" if args.scoring == "one_stage" else "completeness"
        if bundle.kind != expected:
            raise ConfigError(f"{args.models} holds {bundle.kind} models; {args.scoring} scoring needs {expected}")
        models = bundle.models
    histogram = None
    if args.scoring == "h2":
        histogram = duration_histogram(corpus.subset(_split_ids(corpus, "train")), config.h2_bins)
    diagnostics: dict[str, int] = {}
    subset = corpus.subset(_split_ids(corpus, args.split))
    detections = detect_corpus(subset, proposals, models, config, args.scoring, histogram, diagnostics)
    write_jsonl(args.out, (detection_record(d) for d in detections))
    print(f"wrote {len(detections)} detections to {args.out}; {dict(sorted(diagnostics.items()))}")
    return EXIT_OK


def cmd_eval(args, config: PipelineConfig) -> int:
    if args.detections is None and args.proposals is None:
        raise ConfigError("eval needs --detections and/or --proposals")
    corpus = load_corpus(args.corpus)
    subset = corpus.subset(_split_ids(corpus, args.split))
    ids = set(subset.videos)
    detections = [] if args.detections is None else [d for d in read_detections(args.detections) if d.video_id in ids]
    proposals = None
    if args.proposals is not None:
        proposals = {vid: props for vid, props in read_proposals(args.proposals).items() if vid in ids}
    reports = evaluate(subset, detections, proposals, config)
    if args.detections is None:
        reports = {"proposals": reports["proposals"]}
    args.out.write_text(reports_to_json(reports), encoding="utf-8")
    text = reports_to_text(reports)
    if args.text:
        args.text.write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_ablate(args, config: PipelineConfig) -> int:
    corpus = load_corpus(args.corpus)
    proposals = read_proposals(args.proposals) if args.proposals else None
    results = run_ablation(corpus, config, proposals)
    args.out.mkdir(parents=True, exist_ok=True)
    doc = {key: {name: rep.to_dict() for name, rep in reps.items()} for key, reps in results.items()}
    (args.out / "ablation.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    table = ablation_table(results)
    (args.out / "ablation.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_run(args, config: PipelineConfig) -> int:
    if args.manifest is not None:
        try:
            manifest = json.loads(args.manifest.read_text(encoding="utf-8"))
            config, corpus_dir = config_from_manifest(manifest)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"{args.manifest}: {exc}") from None
        if not corpus_dir.exists() and "synth" in manifest["corpus"]:
            log.info("corpus %s missing; regenerating from its synth config", corpus_dir)
            save_corpus(synthesize(SynthConfig.from_dict(manifest["corpus"]["synth"])), corpus_dir)
    else:
        corpus_dir = args.corpus
    result = run_pipeline(corpus_dir, config, args.out)
    print(reports_to_text(result.reports), end="")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "propose": cmd_propose,
    "train": cmd_train,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "run": cmd_run,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = _config(args)
        return COMMANDS[args.command](args, config)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
