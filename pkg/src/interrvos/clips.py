"""Clip extraction from long source videos.

Sources are cut into non-overlapping bins of ``bin_size`` frames; only the
first and last bins are used, and each contributes its leading ``clip_len``
frames.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .dataset import IMAGE_SUFFIXES
from .errors import ConfigError, FrameReadError


@dataclass(frozen=True)
class ClipSpec:
    source_id: str
    start_frame: int
    length: int

    @property
    def stop_frame(self) -> int:
        return self.start_frame + self.length

    def check(self, source_frame_count: int) -> None:
        if self.length < 1 or self.start_frame < 0 or self.stop_frame > source_frame_count:
            raise FrameReadError(
                self.stop_frame - 1,
                f"clip [{self.start_frame}, {self.stop_frame}) outside source of {source_frame_count} frames",
            )


def extract_clips(
    source_frame_count: int,
    bin_size: int = 1000,
    clip_len: int = 500,
    min_len: int = 100,
    source_id: str = "",
) -> list[ClipSpec]:
    if source_frame_count < 1:
        raise ConfigError("source_frame_count must be >= 1")
    if bin_size < 1 or clip_len < 1 or min_len < 1:
        raise ConfigError("bin_size, clip_len and min_len must be >= 1")
    n_bins = -(-source_frame_count // bin_size)
    clips = []
    for b in sorted({0, n_bins - 1}):
        start = b * bin_size
        population = min(bin_size, source_frame_count - start)
        length = min(clip_len, population)
        if length >= min_len:
            clips.append(ClipSpec(source_id, start, length))
    return clips


def materialize_clip(spec: ClipSpec, frame_source, source_frame_count: int | None = None) -> list:
    """Return the frames of ``spec`` in order.

    ``frame_source`` is either a sequence or a callable ``index -> frame``;
    callables must be given ``source_frame_count`` or raise on bad indices.
    """
    if source_frame_count is None and hasattr(frame_source, "__len__"):
        source_frame_count = len(frame_source)
    if source_frame_count is not None:
        spec.check(source_frame_count)
    elif spec.length < 1 or spec.start_frame < 0:
        raise FrameReadError(spec.start_frame, "invalid clip")
    getter = frame_source if callable(frame_source) else frame_source.__getitem__
    frames = []
    for idx in range(spec.start_frame, spec.stop_frame):
        try:
            frames.append(getter(idx))
        except FrameReadError:
            raise
        except (IndexError, KeyError, OSError) as exc:
            raise FrameReadError(idx, str(exc)) from None
    return frames


def list_frames(path) -> dict[str, list[str]]:
    """Resolve ``--frames`` into ``{source_id: [frame names]}``.

    Accepts a directory of images, a directory of per-video image
    directories, or a list file (``.json`` array or one path per line).
    """
    path = Path(path)
    if path.is_dir():
        images = sorted(p.name for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if images:
            return {path.name: images}
        out = {}
        for sub in sorted(p for p in path.iterdir() if p.is_dir()):
            names = sorted(p.name for p in sub.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
            if names:
                out[sub.name] = names
        return out
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        names = json.loads(text)
        if not isinstance(names, list):
            raise ConfigError(f"{path}: expected a JSON array of frame paths")
    else:
        names = [line.strip() for line in text.splitlines() if line.strip()]
    return {path.stem: [str(n) for n in names]}


def build_manifest(sources: dict[str, list[str]], bin_size=1000, clip_len=500, min_len=100) -> dict:
    clips = []
    for source_id in sorted(sources):
        frames = sources[source_id]
        if not frames:
            continue
        for spec in extract_clips(len(frames), bin_size, clip_len, min_len, source_id):
            record = asdict(spec)
            record["frames"] = materialize_clip(spec, frames)
            clips.append(record)
    return {
        "bin_size": bin_size,
        "clip_len": clip_len,
        "min_len": min_len,
        "clips": clips,
    }
