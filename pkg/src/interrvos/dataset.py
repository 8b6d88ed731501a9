"""Annotation schema: videos, objects, typed expressions and actor-target info.

The on-disk form is ``meta_expressions.json``::

    {"videos": {vid: {"frame_count", "height", "width", "frames",
                      "objects": {oid: {...,"track": {frame: RLE}}},
                      "expressions": {eid: {"exp", "type", "obj_ids", "interaction"}}}}}
"""
from __future__ import annotations

import enum
import json
import os
import tempfile
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Mapping

from .errors import InvalidRle, ParseError, SchemaViolation, UnknownExpression
from .masks import MaskTrack


class ExpressionType(str, enum.Enum):
    SINGLE_APPEARANCE_MOTION = "single_appearance_motion"
    SINGLE_APPEARANCE = "single_appearance"
    SINGLE_MOTION = "single_motion"
    MULTI_INSTANCE = "multi_instance"
    INTERACTION = "interaction"

    @property
    def is_single(self) -> bool:
        return self in SINGLE_TYPES


SINGLE_TYPES = frozenset(
    {
        ExpressionType.SINGLE_APPEARANCE_MOTION,
        ExpressionType.SINGLE_APPEARANCE,
        ExpressionType.SINGLE_MOTION,
    }
)


class Direction(str, enum.Enum):
    UNIDIRECTIONAL = "uni"
    BIDIRECTIONAL = "bi"


class Level(str, enum.Enum):
    CLASS = "class"
    APPEARANCE = "appearance"


@dataclass(frozen=True)
class InteractionInfo:
    direction: Direction
    actor_ids: tuple[str, ...]
    target_ids: tuple[str, ...] = ()
    pair_id: str | None = None
    level: Level = Level.CLASS

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "level", Level(self.level))
        object.__setattr__(self, "actor_ids", tuple(self.actor_ids))
        object.__setattr__(self, "target_ids", tuple(self.target_ids))

    @property
    def participants(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.actor_ids) | set(self.target_ids)))

    def to_json(self) -> dict:
        return {
            "direction": self.direction.value,
            "actor_ids": list(self.actor_ids),
            "target_ids": list(self.target_ids),
            "pair_id": self.pair_id,
            "level": self.level.value,
        }


@dataclass(frozen=True)
class Expression:
    expression_id: str
    text: str
    type: ExpressionType
    object_ids: tuple[str, ...]
    interaction: InteractionInfo | None = None

    def __post_init__(self):
        object.__setattr__(self, "type", ExpressionType(self.type))
        object.__setattr__(self, "object_ids", tuple(self.object_ids))

    def to_json(self) -> dict:
        return {
            "exp": self.text,
            "type": self.type.value,
            "obj_ids": list(self.object_ids),
            "interaction": None if self.interaction is None else self.interaction.to_json(),
        }


@dataclass(frozen=True)
class ObjectAnnotation:
    object_id: str
    index_label: int
    category: str
    track: MaskTrack
    appearance: str = ""
    motion: str = ""

    def to_json(self) -> dict:
        return {
            "index_label": self.index_label,
            "category": self.category,
            "appearance": self.appearance,
            "motion": self.motion,
            "track": self.track.to_json(),
        }


@dataclass(frozen=True)
class Video:
    video_id: str
    frame_count: int
    height: int
    width: int
    frames: tuple[str, ...] = ()
    objects: Mapping[str, ObjectAnnotation] = field(default_factory=dict)
    expressions: Mapping[str, Expression] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "objects", dict(self.objects))
        object.__setattr__(self, "expressions", dict(self.expressions))

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.height, self.width)

    def to_json(self) -> dict:
        return {
            "frame_count": self.frame_count,
            "height": self.height,
            "width": self.width,
            "frames": list(self.frames),
            "objects": {oid: self.objects[oid].to_json() for oid in sorted(self.objects)},
            "expressions": {eid: self.expressions[eid].to_json() for eid in sorted(self.expressions)},
        }


@dataclass(frozen=True, eq=False)
class DatasetMeta:
    videos: Mapping[str, Video] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "videos", dict(self.videos))
        index = {}
        for vid in sorted(self.videos):
            for eid in self.videos[vid].expressions:
                index.setdefault(eid, vid)
        object.__setattr__(self, "_index", index)

    def __eq__(self, other):
        if not isinstance(other, DatasetMeta):
            return NotImplemented
        return self.videos == other.videos

    def iter_expressions(self):
        """Yield ``(video, expression)`` in sorted id order."""
        for vid in sorted(self.videos):
            video = self.videos[vid]
            for eid in sorted(video.expressions):
                yield video, video.expressions[eid]

    def find_expression(self, expression_id: str) -> tuple[Video, Expression]:
        vid = self._index.get(expression_id)
        if vid is None:
            raise UnknownExpression(expression_id)
        video = self.videos[vid]
        return video, video.expressions[expression_id]

    def expression_ids(self) -> list[str]:
        return sorted(e.expression_id for _, e in self.iter_expressions())

    def to_json(self) -> dict:
        return {"videos": {vid: self.videos[vid].to_json() for vid in sorted(self.videos)}}


# --- serialization ------------------------------------------------------------

def dumps_meta(meta: DatasetMeta) -> str:
    """Canonical serialization: sorted ids, numeric frame order, one trailing newline."""
    return json.dumps(meta.to_json(), ensure_ascii=False, separators=(",", ":")) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_meta(meta: DatasetMeta, path) -> None:
    atomic_write_text(path, dumps_meta(meta))


def _require(obj, key, loc, kind=None):
    if not isinstance(obj, dict):
        raise ParseError("expected an object", loc)
    if key not in obj:
        raise ParseError(f"missing field {key!r}", loc)
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise ParseError(f"field {key!r} has wrong type {type(value).__name__}", loc)
    return value


def _parse_interaction(raw, loc) -> InteractionInfo | None:
    if raw is None:
        return None
    try:
        return InteractionInfo(
            direction=Direction(_require(raw, "direction", loc, str)),
            actor_ids=tuple(_require(raw, "actor_ids", loc, list)),
            target_ids=tuple(_require(raw, "target_ids", loc, list)),
            pair_id=raw.get("pair_id"),
            level=Level(raw.get("level", "class")),
        )
    except ValueError as exc:
        raise ParseError(str(exc), loc) from None


def meta_from_json(data) -> DatasetMeta:
    videos = {}
    raw_videos = _require(data, "videos", "$", dict)
    for vid, rv in raw_videos.items():
        loc = f"videos.{vid}"
        frame_count = _require(rv, "frame_count", loc, int)
        height = _require(rv, "height", loc, int)
        width = _require(rv, "width", loc, int)
        objects = {}
        for oid, ro in _require(rv, "objects", loc, dict).items():
            oloc = f"{loc}.objects.{oid}"
            try:
                track = MaskTrack.from_json(
                    _require(ro, "track", oloc, dict), frame_count, height, width
                )
            except (InvalidRle, ValueError) as exc:
                raise ParseError(str(exc), f"{oloc}.track") from None
            objects[oid] = ObjectAnnotation(
                object_id=oid,
                index_label=_require(ro, "index_label", oloc, int),
                category=_require(ro, "category", oloc, str),
                appearance=ro.get("appearance", ""),
                motion=ro.get("motion", ""),
                track=track,
            )
        expressions = {}
        for eid, re_ in _require(rv, "expressions", loc, dict).items():
            eloc = f"{loc}.expressions.{eid}"
            try:
                etype = ExpressionType(_require(re_, "type", eloc, str))
            except ValueError as exc:
                raise ParseError(str(exc), eloc) from None
            expressions[eid] = Expression(
                expression_id=eid,
                text=_require(re_, "exp", eloc, str),
                type=etype,
                object_ids=tuple(_require(re_, "obj_ids", eloc, list)),
                interaction=_parse_interaction(re_.get("interaction"), f"{eloc}.interaction"),
            )
        videos[vid] = Video(
            video_id=vid,
            frame_count=frame_count,
            height=height,
            width=width,
            frames=tuple(rv.get("frames", [])),
            objects=objects,
            expressions=expressions,
        )
    return DatasetMeta(videos)


def load_meta(path, validate: bool = True) -> DatasetMeta:
    """Read a meta file; raises ParseError or, if ``validate``, SchemaViolation."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from None
    meta = meta_from_json(data)
    if validate:
        violations = validate_meta(meta)
        if violations:
            first = violations[0]
            raise SchemaViolation(first.rule, first.location)
    return meta


# --- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    video_id: str
    item_id: str
    rule: str
    detail: str = ""

    @property
    def location(self) -> str:
        return f"{self.video_id}/{self.item_id}"

    def __str__(self):
        text = f"{self.location}: {self.rule}"
        return f"{text} ({self.detail})" if self.detail else text


def _validate_interaction(vid, expr: Expression, video: Video, out: list) -> None:
    info = expr.interaction
    eid = expr.expression_id
    actors, targets = set(info.actor_ids), set(info.target_ids)
    for oid in sorted(actors | targets):
        if oid not in video.objects:
            out.append(Violation(vid, eid, "object unresolved", oid))
    if info.direction is Direction.UNIDIRECTIONAL:
        if not actors or not targets:
            out.append(Violation(vid, eid, "uni roles nonempty"))
        if actors & targets:
            out.append(Violation(vid, eid, "uni roles disjoint", ",".join(sorted(actors & targets))))
    else:
        if targets:
            out.append(Violation(vid, eid, "bi target empty"))
        if len(actors) < 2:
            out.append(Violation(vid, eid, "bi participants"))
    if info.pair_id is None:
        return
    partner = video.expressions.get(info.pair_id)
    if partner is None or partner.interaction is None:
        out.append(Violation(vid, eid, "pair_id unresolved", info.pair_id))
        return
    other = partner.interaction
    if set(other.actor_ids) != targets or set(other.target_ids) != actors:
        out.append(Violation(vid, eid, "pair role swap", info.pair_id))
    if other.pair_id != eid:
        out.append(Violation(vid, eid, "pair involution", info.pair_id))


def validate_meta(meta: DatasetMeta) -> list[Violation]:
    """Check every schema invariant; returns violations sorted by location."""
    out: list[Violation] = []
    seen_eids: dict[str, str] = {}
    for vid in sorted(meta.videos):
        video = meta.videos[vid]
        if video.frame_count < 1 or video.height < 1 or video.width < 1:
            out.append(Violation(vid, "-", "video dimensions"))
        if video.frames and len(video.frames) != video.frame_count:
            out.append(Violation(vid, "-", "frame names", f"{len(video.frames)} names"))
        labels: dict[int, str] = {}
        for oid in sorted(video.objects):
            obj = video.objects[oid]
            if obj.index_label in labels:
                out.append(Violation(vid, oid, "index_label unique", labels[obj.index_label]))
            labels.setdefault(obj.index_label, oid)
            if obj.track.resolution != video.resolution:
                out.append(Violation(vid, oid, "track resolution"))
            if obj.track.frame_count != video.frame_count:
                out.append(Violation(vid, oid, "track frame count"))
        for eid in sorted(video.expressions):
            expr = video.expressions[eid]
            if eid in seen_eids:
                out.append(Violation(vid, eid, "expression_id unique", seen_eids[eid]))
            seen_eids.setdefault(eid, vid)
            for oid in expr.object_ids:
                if oid not in video.objects:
                    out.append(Violation(vid, eid, "object unresolved", oid))
            if (expr.type is ExpressionType.INTERACTION) != (expr.interaction is not None):
                out.append(Violation(vid, eid, "interaction presence"))
            if expr.type.is_single and len(expr.object_ids) != 1:
                out.append(Violation(vid, eid, "single object count", str(len(expr.object_ids))))
            if expr.type is ExpressionType.MULTI_INSTANCE and len(set(expr.object_ids)) < 2:
                out.append(Violation(vid, eid, "multi object count", str(len(expr.object_ids))))
            if expr.interaction is not None:
                _validate_interaction(vid, expr, video, out)
    return out


# --- ground truth assembly ----------------------------------------------------

def union_track(video: Video, object_ids) -> MaskTrack:
    tracks = [video.objects[oid].track for oid in sorted(set(object_ids))]
    empty = MaskTrack.empty(video.frame_count, video.height, video.width)
    return reduce(MaskTrack.union, tracks, empty)


def merged_gt_track(meta: DatasetMeta, expression_id: str, dual: bool = False) -> MaskTrack:
    """Ground-truth track for an expression.

    Interaction expressions use actors and targets together unless ``dual`` is
    set, in which case only the actor side is returned (see :func:`role_gt_tracks`).
    """
    video, expr = meta.find_expression(expression_id)
    if expr.interaction is not None:
        ids = expr.interaction.actor_ids if dual else expr.interaction.participants
    else:
        ids = expr.object_ids
    return union_track(video, ids)


def role_gt_tracks(meta: DatasetMeta, expression_id: str) -> tuple[MaskTrack, MaskTrack]:
    video, expr = meta.find_expression(expression_id)
    if expr.interaction is None:
        raise ValueError(f"{expression_id} is not an interaction expression")
    return (
        union_track(video, expr.interaction.actor_ids),
        union_track(video, expr.interaction.target_ids),
    )


# --- PNG import ---------------------------------------------------------------

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


def import_palette_pngs(mask_root, category: str = "object") -> DatasetMeta:
    """Build a track-only meta from per-video folders of indexed-palette PNGs.

    Palette index ``k`` (k >= 1) is the object with ``index_label = k - 1``;
    index 0 is background.
    """
    import numpy as np
    from PIL import Image

    from .masks import BinaryMask, rle_encode

    videos = {}
    root = Path(mask_root)
    for vdir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(p for p in vdir.iterdir() if p.suffix.lower() == ".png")
        if not files:
            continue
        per_label: dict[int, dict[int, object]] = {}
        height = width = None
        for fidx, fpath in enumerate(files):
            with Image.open(fpath) as im:
                if im.mode not in ("P", "L"):
                    raise ParseError(f"expected an indexed-palette PNG, got mode {im.mode}", str(fpath))
                arr = np.asarray(im)
            if height is None:
                height, width = arr.shape
            elif arr.shape != (height, width):
                raise ParseError(f"frame size {arr.shape} differs from {(height, width)}", str(fpath))
            for value in np.unique(arr):
                if value == 0:
                    continue
                rle = rle_encode(BinaryMask(arr == value))
                per_label.setdefault(int(value) - 1, {})[fidx] = rle
        objects = {}
        for label in sorted(per_label):
            oid = str(label)
            track = MaskTrack(len(files), height, width, per_label[label])
            objects[oid] = ObjectAnnotation(oid, label, category, track)
        videos[vdir.name] = Video(
            video_id=vdir.name,
            frame_count=len(files),
            height=height,
            width=width,
            frames=tuple(p.stem for p in files),
            objects=objects,
        )
    return DatasetMeta(videos)
