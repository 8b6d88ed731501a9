"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import BackendError, DataError

log = logging.getLogger("interrvos")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


@dataclass(frozen=True)
class GlobalConfig:
    log_level: str = "info"
    worker_count: int = 1
    seed: int = 0
    audit_dir: str | None = None

    def __post_init__(self):
        if self.worker_count < 1:
            raise UsageError("--workers must be >= 1")


class _JsonLines(logging.Formatter):
    def format(self, record):
        payload = {
            "time": round(record.created, 3),
            "level": record.levelname.lower(),
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload)


def _setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    if level == "debug":
        handler.setFormatter(_JsonLines())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("interrvos")
    root.handlers[:] = [handler]
    root.setLevel(level.upper())
    root.propagate = False


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    p.add_argument("--workers", type=int, default=1, help="worker pool size (default 1)")
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    p.add_argument("--audit", default=None, metavar="DIR", help="log LLM requests/responses here")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="interrvos", description="Interaction-aware RVOS dataset and evaluation toolkit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("annotate", parents=[common], help="run the four-stage annotation pipeline")
    p.add_argument("--frames", default=None, metavar="DIR", help="per-video frame directories")
    p.add_argument("--tracks", required=True, metavar="PATH", help="meta file holding object tracks")
    p.add_argument("--stages", default="1,2,3,4", help="comma-separated subset of 1,2,3,4")
    p.add_argument("--backend", choices=["mock", "http"], default="mock")
    p.add_argument("--mock-responses", default=None, metavar="PATH", help="recorded replies for the mock backend")
    p.add_argument("--record", default=None, metavar="PATH", help="save backend replies for later replay")
    p.add_argument("--base-url", default="https://api.openai.com/v1")
    p.add_argument("--vision-model", default="gpt-4o")
    p.add_argument("--text-model", default="llama-3.1-8b-instruct")
    p.add_argument("--max-concurrency", type=int, default=4, help="in-flight requests per backend")
    p.add_argument("--max-attempts", type=int, default=5)
    p.add_argument("--frames-per-request", type=int, default=8)
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--prompts", default=None, metavar="DIR", help="override prompt template directory")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--resume", action="store_true", help="keep existing stage files")

    p = sub.add_parser("extract-clips", parents=[common], help="cut long sources into clips")
    p.add_argument("--frames", required=True, metavar="DIR_OR_LIST")
    p.add_argument("--bin", type=int, default=1000, dest="bin_size")
    p.add_argument("--clip", type=int, default=500, dest="clip_len")
    p.add_argument("--min-len", type=int, default=100)
    p.add_argument("--out", required=True, metavar="PATH")

    p = sub.add_parser("evaluate", parents=[common], help="score a prediction file")
    p.add_argument("--meta", required=True, metavar="PATH")
    p.add_argument("--preds", required=True, metavar="PATH")
    p.add_argument("--dual", action="store_true", help="score actor-target expressions on both roles")
    p.add_argument("--tolerance", type=float, default=0.008, help="boundary tolerance, fraction of diagonal")
    p.add_argument("--exclude-empty-gt", action="store_true", help="skip frames with empty ground truth")
    p.add_argument("--label", default="", help="row label in the text report")
    p.add_argument("--out", default=None, metavar="PATH", help="text report; JSON mirror goes next to it")

    p = sub.add_parser("stats", parents=[common], help="dataset statistics")
    p.add_argument("--meta", required=True, metavar="PATH")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--format", choices=["text", "json", "csv"], default="text")
    p.add_argument("--out", default=None, metavar="PATH")

    p = sub.add_parser("validate", parents=[common], help="check a meta file against the schema")
    p.add_argument("--meta", required=True, metavar="PATH")

    p = sub.add_parser("import-png", parents=[common], help="build a track-only meta from palette PNGs")
    p.add_argument("--masks", required=True, metavar="DIR", help="one subdirectory of PNGs per video")
    p.add_argument("--category", default="object")
    p.add_argument("--out", required=True, metavar="PATH")
    return parser


def _emit(text: str, out) -> None:
    if out:
        from .dataset import atomic_write_text

        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_validate(args, cfg) -> int:
    from .dataset import load_meta, validate_meta

    meta = load_meta(args.meta, validate=False)
    violations = validate_meta(meta)
    for v in violations:
        print(v)
    print(f"{len(violations)} violations")
    return EXIT_OK if not violations else EXIT_DATA


def cmd_evaluate(args, cfg) -> int:
    from .dataset import load_meta
    from .evaluation import (
        EvalConfig,
        evaluate,
        load_predictions,
        render_report,
        write_report,
    )

    meta = load_meta(args.meta)
    preds, warnings = load_predictions(args.preds, meta)
    for w in warnings:
        log.warning(w)
    config = EvalConfig(
        tolerance_ratio=args.tolerance,
        exclude_empty_gt_frames=args.exclude_empty_gt,
        workers=cfg.worker_count,
        dual=args.dual,
    )
    report = evaluate(meta, preds, config)
    if args.out:
        write_report(report, args.out, label=args.label)
    sys.stdout.write(render_report(report, label=args.label))
    return EXIT_OK


def cmd_stats(args, cfg) -> int:
    from .dataset import load_meta
    from .stats import compute_stats, render_stats

    stats = compute_stats(load_meta(args.meta), fps=args.fps)
    _emit(render_stats(stats, args.format), args.out)
    return EXIT_OK


def cmd_extract_clips(args, cfg) -> int:
    from .clips import build_manifest, list_frames
    from .dataset import atomic_write_text

    sources = list_frames(args.frames)
    manifest = build_manifest(sources, args.bin_size, args.clip_len, args.min_len)
    atomic_write_text(args.out, json.dumps(manifest, indent=1) + "\n")
    print(f"{len(manifest['clips'])} clips from {len(sources)} sources")
    return EXIT_OK


def cmd_import_png(args, cfg) -> int:
    from .dataset import import_palette_pngs, save_meta

    meta = import_palette_pngs(args.masks, category=args.category)
    save_meta(meta, args.out)
    print(f"{len(meta.videos)} videos imported")
    return EXIT_OK


def _parse_stages(text: str) -> tuple[int, ...]:
    try:
        stages = tuple(sorted({int(s) for s in text.split(",") if s.strip()}))
    except ValueError:
        raise UsageError(f"--stages: expected numbers 1-4, got {text!r}") from None
    if not stages or any(s not in (1, 2, 3, 4) for s in stages):
        raise UsageError(f"--stages: expected numbers 1-4, got {text!r}")
    return stages


def cmd_annotate(args, cfg) -> int:
    from .dataset import load_meta
    from .llm.client import DecodeParams, MockBackend, RecordingBackend, RetryPolicy
    from .pipeline import Backends, PipelineConfig, run_pipeline, video_inputs
    from .pipeline.synthetic import synthetic_reply

    stages = _parse_stages(args.stages)
    meta = load_meta(args.tracks)
    if args.backend == "mock":
        if args.mock_responses:
            vision = MockBackend.from_file(args.mock_responses, max_concurrency=args.max_concurrency)
        else:
            vision = MockBackend(responder=synthetic_reply, max_concurrency=args.max_concurrency)
        text = vision
    else:
        from .llm.http import HttpBackend

        vision = HttpBackend(args.base_url, args.vision_model, vision=True,
                             max_concurrency=args.max_concurrency, audit_dir=cfg.audit_dir)
        text = HttpBackend(args.base_url, args.text_model, vision=False,
                           max_concurrency=args.max_concurrency, audit_dir=cfg.audit_dir)
    recorders = []
    if args.record:
        vision = RecordingBackend(vision)
        text = vision if args.backend == "mock" else RecordingBackend(text)
        recorders = [vision] if text is vision else [vision, text]
    config = PipelineConfig(
        frames_per_request=args.frames_per_request,
        decode=DecodeParams(temperature=args.temperature, seed=cfg.seed),
        prompt_dir=args.prompts,
        retry=RetryPolicy(max_attempts=args.max_attempts, rng=random.Random(cfg.seed)),
    )
    frame_names = {vid: v.frames for vid, v in meta.videos.items()}
    try:
        result = run_pipeline(
            video_inputs(meta, args.frames), Backends(vision, text), args.out, stages,
            config, args.resume, cfg.worker_count, frame_names,
        )
    finally:
        if recorders:
            merged = {}
            for r in recorders:
                merged.update(r.recorded)
            recorders[0].recorded = merged
            recorders[0].save(args.record)
    if result is None:
        print(f"stages {','.join(map(str, stages))} done; dataset not assembled until all stages exist")
    else:
        n = sum(len(v.expressions) for v in result.videos.values())
        print(f"{len(result.videos)} videos, {n} expressions -> {Path(args.out) / 'meta_expressions.json'}")
    return EXIT_OK


COMMANDS = {
    "annotate": cmd_annotate,
    "extract-clips": cmd_extract_clips,
    "evaluate": cmd_evaluate,
    "stats": cmd_stats,
    "validate": cmd_validate,
    "import-png": cmd_import_png,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = GlobalConfig(args.log_level, args.workers, args.seed, args.audit)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    _setup_logging(cfg.log_level)
    try:
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"interrvos {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"interrvos {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"interrvos {args.command}: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except KeyboardInterrupt:
        print(f"interrvos {args.command}: interrupted; completed stage files are kept", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
