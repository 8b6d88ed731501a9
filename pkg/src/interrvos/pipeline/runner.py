"""Resumable per-video execution with one JSON file per (video, stage)."""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..dataset import (
    IMAGE_SUFFIXES,
    DatasetMeta,
    atomic_write_text,
    dumps_meta,
    save_meta,
)
from ..errors import DataError, FrameReadError
from ..llm.client import Backend
from .assemble import assemble_dataset, merge_metas
from .stages import (
    PipelineConfig,
    Stage1Output,
    Stage2Output,
    Stage3Output,
    Stage4Output,
    VideoInput,
    run_stage1,
    run_stage2,
    run_stage3,
    run_stage4,
)

log = logging.getLogger(__name__)

STAGE_TYPES = {1: Stage1Output, 2: Stage2Output, 3: Stage3Output, 4: Stage4Output}


@dataclass(frozen=True)
class Backends:
    vision: Backend
    text: Backend


def stage_path(out_dir, video_id: str, stage: int) -> Path:
    return Path(out_dir) / video_id / f"stage{stage}.json"


def _dump(obj) -> str:
    return json.dumps(obj.to_json(), indent=1, ensure_ascii=False) + "\n"


def content_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_stage(out_dir, video_id: str, stage: int):
    path = stage_path(out_dir, video_id, stage)
    try:
        return STAGE_TYPES[stage].from_json(json.loads(path.read_text(encoding="utf-8")))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: unreadable stage file ({exc})") from None


def run_video(
    video: VideoInput,
    backends: Backends,
    out_dir,
    stages: Sequence[int] = (1, 2, 3, 4),
    config: PipelineConfig = PipelineConfig(),
    resume: bool = False,
    frame_names=(),
) -> DatasetMeta | None:
    """Run the requested stages for one video; returns its meta once all four exist."""
    done: dict[int, object] = {}

    def get(n):
        if n not in done:
            if not stage_path(out_dir, video.video_id, n).exists():
                raise DataError(f"{video.video_id}: stage {n} output is required but missing")
            done[n] = load_stage(out_dir, video.video_id, n)
        return done[n]

    for n in (1, 2, 3, 4):
        path = stage_path(out_dir, video.video_id, n)
        if n not in stages or (resume and path.exists()):
            continue
        if n == 1:
            result = run_stage1(video, backends.vision, config)
        elif n == 2:
            result = run_stage2(get(1), backends.text, config)
        elif n == 3:
            result = run_stage3(video, backends.vision, config)
        else:
            result = run_stage4(get(2), get(3), backends.text, config)
        atomic_write_text(path, _dump(result))
        done[n] = result
        log.info("%s: stage %d written", video.video_id, n)

    if not all(stage_path(out_dir, video.video_id, n).exists() for n in (1, 2, 3, 4)):
        return None
    meta = assemble_dataset(video, get(1), get(2), get(3), get(4), frame_names)
    save_meta(meta, Path(out_dir) / video.video_id / "meta.json")
    return meta


def run_pipeline(
    videos: Sequence[VideoInput],
    backends: Backends,
    out_dir,
    stages: Sequence[int] = (1, 2, 3, 4),
    config: PipelineConfig = PipelineConfig(),
    resume: bool = False,
    workers: int = 1,
    frame_names: dict | None = None,
) -> DatasetMeta | None:
    """Process videos concurrently; writes ``meta_expressions.json`` when every video is complete."""
    frame_names = frame_names or {}

    def one(video):
        return run_video(video, backends, out_dir, stages, config, resume, frame_names.get(video.video_id, ()))

    ordered = sorted(videos, key=lambda v: v.video_id)
    if workers <= 1:
        results = [one(v) for v in ordered]
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        try:
            results = list(pool.map(one, ordered))
        except BaseException:
            pool.shutdown(wait=True, cancel_futures=True)
            raise
        pool.shutdown()
    if any(r is None for r in results):
        return None
    meta = merge_metas(results)
    atomic_write_text(Path(out_dir) / "meta_expressions.json", dumps_meta(meta))
    return meta


# --- inputs -------------------------------------------------------------------------

class FrameDirectory:
    """Lazy RGB frame reader over a directory of images sorted by name."""

    def __init__(self, path):
        self.path = Path(path)
        self.files = sorted(p for p in self.path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)

    def __len__(self):
        return len(self.files)

    def __getitem__(self, index: int) -> np.ndarray:
        from PIL import Image

        if not 0 <= index < len(self.files):
            raise FrameReadError(index, f"{self.path} has {len(self.files)} frames")
        try:
            with Image.open(self.files[index]) as im:
                return np.asarray(im.convert("RGB"))
        except OSError as exc:
            raise FrameReadError(index, str(exc)) from None


def video_inputs(meta: DatasetMeta, frames_root=None) -> list[VideoInput]:
    """One VideoInput per video of a track-only meta, with frames from ``frames_root/<video_id>``."""
    out = []
    for vid in sorted(meta.videos):
        v = meta.videos[vid]
        frames = None
        if frames_root is not None:
            vdir = Path(frames_root) / vid
            if not vdir.is_dir():
                raise DataError(f"no frame directory for video {vid} under {frames_root}")
            frames = FrameDirectory(vdir)
            if len(frames) != v.frame_count:
                raise DataError(f"{vid}: {len(frames)} frames on disk, meta says {v.frame_count}")
        objects = sorted(v.objects.values(), key=lambda o: o.index_label)
        out.append(VideoInput(vid, v.frame_count, v.height, v.width, objects, frames))
    return out
