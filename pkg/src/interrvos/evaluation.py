"""Referring / Actor-Target / Overall evaluation, dual-mask scoring and eval splits."""
from __future__ import annotations

import enum
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Mapping

from .dataset import (
    DatasetMeta,
    Direction,
    Expression,
    ExpressionType,
    Video,
    merged_gt_track,
    role_gt_tracks,
)
from .errors import (
    ConfigError,
    InvalidRle,
    MissingTargetTrack,
    ParseError,
    ResolutionMismatch,
)
from .masks import MaskTrack
from .metrics import (
    DEFAULT_TOLERANCE,
    ExpressionScore,
    jf_score,
    mean_fixed_order,
    score_track,
)

log = logging.getLogger(__name__)


class Category(str, enum.Enum):
    REFERRING = "Referring"
    ACTOR_TARGET = "Actor-Target"
    OVERALL = "Overall"


def categorize(expr: Expression) -> Category:
    info = expr.interaction
    if (
        expr.type is ExpressionType.INTERACTION
        and info is not None
        and info.direction is Direction.UNIDIRECTIONAL
        and info.pair_id is not None
    ):
        return Category.ACTOR_TARGET
    return Category.REFERRING


# --- predictions ----------------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    primary: MaskTrack
    target: MaskTrack | None = None


PredictionSet = Mapping[str, Prediction]


def load_predictions(path, meta: DatasetMeta) -> tuple[dict[str, Prediction], list[str]]:
    """Parse a prediction file against ``meta``.

    Returns the prediction set and warnings for expression ids unknown to
    ``meta`` (those entries are dropped).
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from None
    return predictions_from_json(data, meta)


def predictions_from_json(data, meta: DatasetMeta) -> tuple[dict[str, Prediction], list[str]]:
    if not isinstance(data, dict) or not isinstance(data.get("predictions"), dict):
        raise ParseError("missing 'predictions' object", "$")
    preds, warnings = {}, []
    for eid, entry in data["predictions"].items():
        loc = f"predictions.{eid}"
        try:
            video, _ = meta.find_expression(eid)
        except KeyError:
            warnings.append(f"unknown expression {eid!r} ignored")
            continue
        if not isinstance(entry, dict) or "primary" not in entry:
            raise ParseError("expected {'primary': ..., 'target': ...}", loc)
        try:
            primary = _track_from_json(entry["primary"], video)
            target = entry.get("target")
            target = None if target is None else _track_from_json(target, video)
        except (InvalidRle, ValueError, TypeError, AttributeError) as exc:
            if isinstance(exc, ResolutionMismatch):
                raise
            raise ParseError(str(exc), loc) from None
        preds[eid] = Prediction(primary, target)
    return preds, warnings


def _track_from_json(obj, video: Video) -> MaskTrack:
    track = MaskTrack.from_json(obj, video.frame_count, video.height, video.width)
    return track


def predictions_to_json(preds: PredictionSet) -> dict:
    return {
        "predictions": {
            eid: {
                "primary": preds[eid].primary.to_json(),
                "target": None if preds[eid].target is None else preds[eid].target.to_json(),
            }
            for eid in sorted(preds)
        }
    }


# --- reports --------------------------------------------------------------------

@dataclass(frozen=True)
class CategoryScore:
    j: float
    f: float
    jf: float
    expression_count: int

    def to_json(self) -> dict:
        return {"J": self.j, "F": self.f, "JF": self.jf, "count": self.expression_count}


@dataclass(frozen=True)
class EvalReport:
    per_expression: Mapping[str, ExpressionScore]
    categories: Mapping[Category, CategoryScore]
    mode: str = "independent"
    warnings: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "categories": {c.value: self.categories[c].to_json() for c in Category},
            "per_expression": {eid: self.per_expression[eid].to_json() for eid in sorted(self.per_expression)},
            "warnings": list(self.warnings),
        }


def _category_score(scores: list[ExpressionScore]) -> CategoryScore:
    j = mean_fixed_order(s.j_mean for s in scores)
    f = mean_fixed_order(s.f_mean for s in scores)
    return CategoryScore(j, f, jf_score(j, f), len(scores))


def build_report(
    meta: DatasetMeta,
    per_expression: Mapping[str, ExpressionScore],
    mode: str = "independent",
    warnings=(),
) -> EvalReport:
    members: dict[Category, list[ExpressionScore]] = {c: [] for c in Category}
    for eid in sorted(per_expression):
        _, expr = meta.find_expression(eid)
        score = per_expression[eid]
        members[categorize(expr)].append(score)
        members[Category.OVERALL].append(score)
    categories = {c: _category_score(members[c]) for c in Category}
    return EvalReport(dict(sorted(per_expression.items())), categories, mode, tuple(warnings))


# --- evaluation -----------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    tolerance_ratio: float = DEFAULT_TOLERANCE
    exclude_empty_gt_frames: bool = False
    workers: int = 1
    dual: bool = False

    def __post_init__(self):
        if self.tolerance_ratio <= 0:
            raise ConfigError("tolerance_ratio must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _prediction_for(video: Video, preds: PredictionSet, eid: str) -> Prediction:
    pred = preds.get(eid)
    if pred is None:
        return Prediction(MaskTrack.empty(video.frame_count, video.height, video.width))
    if pred.primary.resolution != video.resolution:
        raise ResolutionMismatch(f"{eid}: prediction {pred.primary.resolution} vs video {video.resolution}")
    if pred.target is not None and pred.target.resolution != video.resolution:
        raise ResolutionMismatch(f"{eid}: target {pred.target.resolution} vs video {video.resolution}")
    return pred


def _score_independent(meta, preds, eid, config) -> ExpressionScore:
    video, _ = meta.find_expression(eid)
    pred = _prediction_for(video, preds, eid)
    gt = merged_gt_track(meta, eid)
    return score_track(pred.primary, gt, config.tolerance_ratio, config.exclude_empty_gt_frames)


def _score_dual(meta, preds, eid, config) -> ExpressionScore:
    video, _ = meta.find_expression(eid)
    empty = MaskTrack.empty(video.frame_count, video.height, video.width)
    if eid in preds:
        pred = _prediction_for(video, preds, eid)
        if pred.target is None:
            raise MissingTargetTrack(f"{eid}: actor-target expression has no target track")
    else:
        pred = Prediction(empty, empty)
    actor_gt, target_gt = role_gt_tracks(meta, eid)
    a = score_track(pred.primary, actor_gt, config.tolerance_ratio, config.exclude_empty_gt_frames)
    t = score_track(pred.target, target_gt, config.tolerance_ratio, config.exclude_empty_gt_frames)
    return ExpressionScore.from_means(
        (a.j_mean + t.j_mean) / 2, (a.f_mean + t.f_mean) / 2, a.frame_count
    )


def _run(jobs: list[tuple[str, object]], meta, preds, config) -> dict[str, ExpressionScore]:
    def one(job):
        eid, fn = job
        return eid, fn(meta, preds, eid, config)

    if config.workers == 1 or len(jobs) < 2:
        results = [one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(one, jobs))
    return dict(sorted(results))


def _unknown_warnings(meta, preds) -> list[str]:
    known = set(meta.expression_ids())
    return [f"unknown expression {eid!r} ignored" for eid in sorted(preds) if eid not in known]


def evaluate(meta: DatasetMeta, preds: PredictionSet, config: EvalConfig = EvalConfig()) -> EvalReport:
    """Score every expression of ``meta``; missing predictions count as empty tracks.

    With ``config.dual`` the Actor-Target expressions are scored on both
    roles as in :func:`evaluate_dual`; everything else scores against the
    merged ground truth.
    """
    jobs = []
    for _, expr in meta.iter_expressions():
        dual = config.dual and categorize(expr) is Category.ACTOR_TARGET
        jobs.append((expr.expression_id, _score_dual if dual else _score_independent))
    scores = _run(jobs, meta, preds, config)
    mode = "dual" if config.dual else "independent"
    return build_report(meta, scores, mode, _unknown_warnings(meta, preds))


def evaluate_dual(meta: DatasetMeta, preds: PredictionSet, config: EvalConfig = EvalConfig()) -> EvalReport:
    """Actor-Target expressions only: mean of actor-track and target-track scores."""
    jobs = [
        (expr.expression_id, _score_dual)
        for _, expr in meta.iter_expressions()
        if categorize(expr) is Category.ACTOR_TARGET
    ]
    scores = _run(jobs, meta, preds, config)
    return build_report(meta, scores, "dual-only", _unknown_warnings(meta, preds))


# --- rendering ------------------------------------------------------------------

def format_cell(value: float, precision: int = 1, scale: float = 100.0) -> str:
    # snap float noise (0.6005*100 = 60.050000000000004) before half-even rounding
    snapped = Decimal(f"{value * scale:.9f}")
    quantum = Decimal(1).scaleb(-precision)
    return str(snapped.quantize(quantum, rounding=ROUND_HALF_EVEN))


def render_report(report: EvalReport, precision: int = 1, scale: float = 100.0, label: str = "") -> str:
    cats = list(Category)
    cells = []
    for c in cats:
        s = report.categories[c]
        cells.extend(format_cell(v, precision, scale) for v in (s.j, s.f, s.jf))
    width = max([len(x) for x in cells] + [4])
    name_w = max(len(label), 6)

    def fmt_row(name, values):
        groups = []
        for i in range(0, len(values), 3):
            groups.append(" ".join(v.rjust(width) for v in values[i : i + 3]))
        return f"{name.ljust(name_w)} | " + " | ".join(groups)

    group_w = 3 * width + 2
    head1 = f"{''.ljust(name_w)} | " + " | ".join(c.value.center(group_w) for c in cats)
    head2 = fmt_row("", ["J", "F", "J&F"] * len(cats))
    counts = " | ".join(
        f"n={report.categories[c].expression_count}".center(group_w) for c in cats
    )
    lines = [
        f"mode: {report.mode}",
        head1,
        head2,
        "-" * len(head2),
        fmt_row(label or "result", cells),
        f"{''.ljust(name_w)} | {counts}",
    ]
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, out_path, label: str = "") -> tuple[Path, Path]:
    """Write the text table to ``out_path`` and the JSON mirror next to it."""
    from .dataset import atomic_write_text

    out = Path(out_path)
    json_path = out.with_suffix(".json") if out.suffix != ".json" else out.with_suffix(".report.json")
    atomic_write_text(out, render_report(report, label=label))
    atomic_write_text(json_path, json.dumps(report.to_json(), indent=2, sort_keys=False) + "\n")
    return out, json_path


# --- evaluation split -----------------------------------------------------------

@dataclass(frozen=True)
class SplitConfig:
    train_video_ids: frozenset[str] = field(default_factory=frozenset)
    interaction_min_fraction: float = 0.0
    single_downsample_rate: float = 1.0
    seed: int = 0
    eval_video_ids: frozenset[str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "train_video_ids", frozenset(self.train_video_ids))
        if self.eval_video_ids is not None:
            object.__setattr__(self, "eval_video_ids", frozenset(self.eval_video_ids))
            overlap = self.train_video_ids & self.eval_video_ids
            if overlap:
                raise ConfigError(f"train and eval videos overlap: {sorted(overlap)}")
        if not 0.0 <= self.single_downsample_rate <= 1.0:
            raise ConfigError("single_downsample_rate must be in [0, 1]")
        if not 0.0 <= self.interaction_min_fraction <= 1.0:
            raise ConfigError("interaction_min_fraction must be in [0, 1]")


def _interaction_fraction(n_inter: int, n_total: int) -> float:
    return n_inter / n_total if n_total else 0.0


def build_eval_split(meta: DatasetMeta, config: SplitConfig) -> DatasetMeta:
    """Drop training videos, then thin single-object expressions.

    Each round keeps ``floor(n * rate)`` of the remaining single-object
    expressions (at least one fewer than before), sampled with ``seed``,
    until the interaction share reaches ``interaction_min_fraction``.
    """
    if config.eval_video_ids is not None:
        missing = config.eval_video_ids - set(meta.videos)
        if missing:
            raise ConfigError(f"eval videos not in meta: {sorted(missing)}")
        keep_videos = sorted(config.eval_video_ids)
    else:
        keep_videos = sorted(v for v in meta.videos if v not in config.train_video_ids)
    videos = {v: meta.videos[v] for v in keep_videos}

    singles, n_inter, n_total = [], 0, 0
    for vid in keep_videos:
        for eid in sorted(videos[vid].expressions):
            expr = videos[vid].expressions[eid]
            n_total += 1
            if expr.type.is_single:
                singles.append((vid, eid))
            elif expr.type is ExpressionType.INTERACTION:
                n_inter += 1

    rng = random.Random(config.seed)
    kept = list(singles)
    rate = config.single_downsample_rate
    others = n_total - len(singles)
    while (
        rate < 1.0
        and kept
        and _interaction_fraction(n_inter, others + len(kept)) < config.interaction_min_fraction
    ):
        n_keep = min(int(len(kept) * rate), len(kept) - 1)
        kept = sorted(rng.sample(kept, n_keep))
    dropped = set(singles) - set(kept)

    out = {}
    for vid, video in videos.items():
        exprs = {eid: e for eid, e in video.expressions.items() if (vid, eid) not in dropped}
        out[vid] = Video(
            video.video_id, video.frame_count, video.height, video.width,
            video.frames, video.objects, exprs,
        )
    log.info("eval split: %d videos, %d of %d single expressions kept", len(out), len(kept), len(singles))
    return DatasetMeta(out)
