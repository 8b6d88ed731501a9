"""Corpus statistics: counts, per-video histograms, word frequencies."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field, fields

from .dataset import DatasetMeta, ExpressionType
from .textutil import content_tokens

Histogram = dict  # bucket label -> count, in bucket order


def exact_hist(values) -> Histogram:
    counts = Counter(values)
    return {str(k): counts[k] for k in sorted(counts)}


def binned_hist(values, width: float) -> Histogram:
    counts = Counter(int(math.floor(v / width)) for v in values)
    out = {}
    for b in sorted(counts):
        lo, hi = b * width, (b + 1) * width
        label = f"{lo:g}-{hi:g}"
        out[label] = counts[b]
    return out


@dataclass
class DatasetStats:
    video_count: int = 0
    object_count: int = 0
    expression_count: int = 0
    objects_per_video: float = 0.0
    interaction_expression_count: int = 0
    videos_with_interaction_fraction: float = 0.0
    expressions_per_video_hist: Histogram = field(default_factory=dict)
    objects_per_video_hist: Histogram = field(default_factory=dict)
    duration_hist: Histogram = field(default_factory=dict)
    frame_count_hist: Histogram = field(default_factory=dict)
    interactions_per_video_hist: Histogram = field(default_factory=dict)
    objects_per_interaction_hist: Histogram = field(default_factory=dict)
    word_freq: dict = field(default_factory=dict)
    fps: float = 30.0

    SCALARS = (
        "video_count",
        "object_count",
        "expression_count",
        "objects_per_video",
        "interaction_expression_count",
        "videos_with_interaction_fraction",
        "fps",
    )
    HISTOGRAMS = (
        "expressions_per_video_hist",
        "objects_per_video_hist",
        "duration_hist",
        "frame_count_hist",
        "interactions_per_video_hist",
        "objects_per_interaction_hist",
        "word_freq",
    )

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_json(cls, data) -> "DatasetStats":
        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


def compute_stats(
    meta: DatasetMeta,
    fps: float = 30.0,
    expressions_bin: int = 5,
    duration_bin: float = 5.0,
    frames_bin: int = 100,
) -> DatasetStats:
    if fps <= 0:
        raise ValueError("fps must be positive")
    videos = [meta.videos[v] for v in sorted(meta.videos)]
    n_videos = len(videos)
    n_objects = sum(len(v.objects) for v in videos)
    per_video_exprs, per_video_inter, per_inter_objects = [], [], []
    words: Counter = Counter()
    for v in videos:
        per_video_exprs.append(len(v.expressions))
        n_inter = 0
        for eid in sorted(v.expressions):
            e = v.expressions[eid]
            words.update(content_tokens(e.text))
            if e.type is ExpressionType.INTERACTION:
                n_inter += 1
                if e.interaction is not None:
                    per_inter_objects.append(len(e.interaction.participants))
        per_video_inter.append(n_inter)
    word_freq = dict(sorted(words.items(), key=lambda kv: (-kv[1], kv[0])))
    return DatasetStats(
        video_count=n_videos,
        object_count=n_objects,
        expression_count=sum(per_video_exprs),
        objects_per_video=n_objects / n_videos if n_videos else 0.0,
        interaction_expression_count=sum(per_video_inter),
        videos_with_interaction_fraction=(
            sum(1 for n in per_video_inter if n > 0) / n_videos if n_videos else 0.0
        ),
        expressions_per_video_hist=binned_hist(per_video_exprs, expressions_bin),
        objects_per_video_hist=exact_hist(len(v.objects) for v in videos),
        duration_hist=binned_hist((v.frame_count / fps for v in videos), duration_bin),
        frame_count_hist=binned_hist((v.frame_count for v in videos), frames_bin),
        interactions_per_video_hist=exact_hist(per_video_inter),
        objects_per_interaction_hist=exact_hist(per_inter_objects),
        word_freq=word_freq,
        fps=fps,
    )


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def render_stats(stats: DatasetStats, fmt: str = "text", top_words: int | None = None) -> str:
    if fmt == "json":
        return json.dumps(stats.to_json(), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["section", "key", "value"])
        for name in DatasetStats.SCALARS:
            writer.writerow(["scalar", name, getattr(stats, name)])
        for name in DatasetStats.HISTOGRAMS:
            for key, count in getattr(stats, name).items():
                writer.writerow([name, key, count])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    lines = []
    width = max(len(n) for n in DatasetStats.SCALARS)
    for name in DatasetStats.SCALARS:
        value = getattr(stats, name)
        if name == "objects_per_video":
            shown = f"{value:.2f}"
        else:
            shown = _fmt(value)
        lines.append(f"{name.ljust(width)}  {shown}")
    for name in DatasetStats.HISTOGRAMS:
        hist = getattr(stats, name)
        items = list(hist.items())
        if name == "word_freq" and top_words is not None:
            items = items[:top_words]
        lines.append("")
        lines.append(f"{name}:")
        if not items:
            lines.append("  (empty)")
        key_w = max((len(k) for k, _ in items), default=0)
        for key, count in items:
            lines.append(f"  {key.ljust(key_w)}  {count}")
    return "\n".join(lines) + "\n"
