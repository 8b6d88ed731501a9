"""The four annotation stages.

Stage 1 captions every object from a single-object overlay, stage 2 turns
captions into typed referring expressions and merges motion-alike objects,
stage 3 finds interactions on an all-object overlay, and stage 4 rewrites
index-based interaction captions into class-level and appearance-level
expressions.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..dataset import Direction, Level, ObjectAnnotation
from ..errors import MissingBinding, NotUnidirectional, ParseFailure
from ..llm.client import (
    Backend,
    DecodeParams,
    LlmRequest,
    RequestKind,
    RetryPolicy,
    complete,
)
from ..llm.prompts import render_prompt
from ..textutil import content_tokens
from .overlay import (
    ALL_OBJECTS,
    SingleObject,
    encode_frame,
    render_overlay,
    sample_indices,
)
from .parsing import (
    INDEX_TOKEN,
    has_index_token,
    index_tokens,
    parse_fields,
    parse_labels,
    split_blocks,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    frames_per_request: int = 8
    image_format: str = "png"
    decode: DecodeParams = field(default_factory=DecodeParams)
    merge_similarity: float = 0.5
    prompt_dir: str | None = None
    retry: RetryPolicy | None = None


@dataclass(frozen=True)
class VideoInput:
    """Frames plus the annotated objects of one video.

    ``frames`` is a sequence of HxWx3 uint8 arrays or a callable returning
    the frame at an index; only sampled frames are ever read.
    """

    video_id: str
    frame_count: int
    height: int
    width: int
    objects: Sequence[ObjectAnnotation]
    frames: Sequence | Callable[[int], np.ndarray] | None = None

    def frame(self, index: int) -> np.ndarray:
        if self.frames is None:
            # no imagery supplied: a neutral grey canvas still carries the overlays
            return np.full((self.height, self.width, 3), 128, dtype=np.uint8)
        if callable(self.frames):
            return np.asarray(self.frames(index))
        return np.asarray(self.frames[index])

    @property
    def by_label(self) -> dict[int, ObjectAnnotation]:
        return {o.index_label: o for o in self.objects}


# --- stage artifacts --------------------------------------------------------------

@dataclass(frozen=True)
class ObjectCaption:
    object_id: str
    index_label: int
    category: str
    appearance: str
    motion: str


@dataclass(frozen=True)
class Stage1Output:
    captions: Mapping[str, ObjectCaption]

    def to_json(self) -> dict:
        return {
            "objects": {
                oid: {
                    "index_label": c.index_label,
                    "category": c.category,
                    "appearance": c.appearance,
                    "motion": c.motion,
                }
                for oid, c in sorted(self.captions.items())
            }
        }

    @classmethod
    def from_json(cls, data) -> "Stage1Output":
        return cls({oid: ObjectCaption(oid, **v) for oid, v in data["objects"].items()})


@dataclass(frozen=True)
class SingleExpressions:
    object_id: str
    index_label: int
    category: str
    appearance_only: str
    motion_only: str
    combined: str


@dataclass(frozen=True)
class MergeGroup:
    object_ids: tuple[str, ...]
    text: str


@dataclass(frozen=True)
class Stage2Output:
    expressions: Mapping[str, SingleExpressions]
    merge_groups: tuple[MergeGroup, ...] = ()

    def __post_init__(self):
        seen = set()
        for g in self.merge_groups:
            if len(g.object_ids) < 2:
                raise ValueError("merge groups need at least two objects")
            if seen & set(g.object_ids):
                raise ValueError("merge groups overlap")
            seen |= set(g.object_ids)

    def to_json(self) -> dict:
        return {
            "objects": {
                oid: {
                    "index_label": e.index_label,
                    "category": e.category,
                    "appearance_only": e.appearance_only,
                    "motion_only": e.motion_only,
                    "combined": e.combined,
                }
                for oid, e in sorted(self.expressions.items())
            },
            "merge_groups": [{"object_ids": list(g.object_ids), "text": g.text} for g in self.merge_groups],
        }

    @classmethod
    def from_json(cls, data) -> "Stage2Output":
        exprs = {oid: SingleExpressions(oid, **v) for oid, v in data["objects"].items()}
        groups = tuple(MergeGroup(tuple(g["object_ids"]), g["text"]) for g in data["merge_groups"])
        return cls(exprs, groups)


@dataclass(frozen=True)
class Interaction:
    direction: Direction
    actor_indices: tuple[int, ...]
    target_indices: tuple[int, ...]
    forward_caption: str
    reversed_caption: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "actor_indices", tuple(self.actor_indices))
        object.__setattr__(self, "target_indices", tuple(self.target_indices))
        if self.direction is Direction.UNIDIRECTIONAL:
            if not self.actor_indices or not self.target_indices:
                raise ValueError("unidirectional interactions need an actor and a target")
            if set(self.actor_indices) & set(self.target_indices):
                raise ValueError("actor and target overlap")
            if not self.reversed_caption:
                raise ValueError("unidirectional interactions need a reversed caption")
        else:
            if self.target_indices or self.reversed_caption:
                raise ValueError("bidirectional interactions have no target or reversed caption")
            if len(set(self.actor_indices)) < 2:
                raise ValueError("bidirectional interactions need two participants")

    @property
    def participants(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.actor_indices) | set(self.target_indices)))

    def to_json(self) -> dict:
        return {
            "direction": self.direction.value,
            "actor_indices": list(self.actor_indices),
            "target_indices": list(self.target_indices),
            "forward_caption": self.forward_caption,
            "reversed_caption": self.reversed_caption,
        }

    @classmethod
    def from_json(cls, data) -> "Interaction":
        return cls(
            Direction(data["direction"]),
            tuple(data["actor_indices"]),
            tuple(data["target_indices"]),
            data["forward_caption"],
            data.get("reversed_caption"),
        )


@dataclass(frozen=True)
class Stage3Output:
    interactions: tuple[Interaction, ...] = ()
    # index label -> object id, so later stages need not re-read the tracks
    labels: Mapping[int, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "labels": {str(k): v for k, v in sorted(self.labels.items())},
            "interactions": [i.to_json() for i in self.interactions],
        }

    @classmethod
    def from_json(cls, data) -> "Stage3Output":
        return cls(
            tuple(Interaction.from_json(i) for i in data["interactions"]),
            {int(k): v for k, v in data.get("labels", {}).items()},
        )


@dataclass(frozen=True)
class EnrichedCaption:
    interaction: int
    role: str  # "forward" or "reversed"
    level: Level
    direction: Direction
    text: str
    actor_ids: tuple[str, ...]
    target_ids: tuple[str, ...]
    fallback: bool = False

    def to_json(self) -> dict:
        return {
            "interaction": self.interaction,
            "role": self.role,
            "level": Level(self.level).value,
            "direction": Direction(self.direction).value,
            "text": self.text,
            "actor_ids": list(self.actor_ids),
            "target_ids": list(self.target_ids),
            "fallback": self.fallback,
        }

    @classmethod
    def from_json(cls, data) -> "EnrichedCaption":
        return cls(
            data["interaction"], data["role"], Level(data["level"]), Direction(data["direction"]),
            data["text"], tuple(data["actor_ids"]), tuple(data["target_ids"]), data["fallback"],
        )


@dataclass(frozen=True)
class Stage4Output:
    captions: tuple[EnrichedCaption, ...] = ()

    def __post_init__(self):
        for c in self.captions:
            if has_index_token(c.text):
                raise ValueError(f"residual index token in {c.text!r}")

    def to_json(self) -> dict:
        return {"captions": [c.to_json() for c in self.captions]}

    @classmethod
    def from_json(cls, data) -> "Stage4Output":
        return cls(tuple(EnrichedCaption.from_json(c) for c in data["captions"]))


# --- shared request helpers ---------------------------------------------------------

class _Asker:
    """Sends a request, parses it, and reprompts once with a format reminder."""

    def __init__(self, backend: Backend, config: PipelineConfig):
        self.backend = backend
        self.config = config

    def prompt(self, template: str, bindings: Mapping[str, str]) -> tuple[str, str]:
        system = render_prompt(f"{template}.system", {}, self.config.prompt_dir)
        user = render_prompt(f"{template}.user", bindings, self.config.prompt_dir)
        return system, user

    def request(self, template, system, user, images=()) -> str:
        kind = RequestKind.VISION_CHAT if images else RequestKind.TEXT_CHAT
        req = LlmRequest(kind, system, user, tuple(images), self.config.decode, tag=template)
        return complete(self.backend, req, self.config.retry).text

    def ask(self, template, bindings, parse, item, images=(), attempts: int = 2):
        """Return ``parse(text)``; ``parse`` raises ValueError to demand a retry.

        After ``attempts`` failures a ParseFailure is raised with the last reply.
        """
        system, user = self.prompt(template, bindings)
        text = self.request(template, system, user, images)
        for attempt in range(1, attempts + 1):
            try:
                return parse(text)
            except ValueError as exc:
                if attempt == attempts:
                    raise ParseFailure(item, text, str(exc)) from None
                log.info("%s: reply rejected (%s), reprompting", item, exc)
                reminder = render_prompt("format_reminder", {"problem": str(exc)}, self.config.prompt_dir)
                text = self.request(template, system, f"{user}\n\n{reminder}", images)


def _images(video: VideoInput, tracks, mode, config: PipelineConfig) -> list[bytes]:
    idx = sample_indices(video.frame_count, config.frames_per_request)
    frames = [video.frame(i) for i in idx]
    overlays = render_overlay(frames, tracks, mode, idx)
    return [encode_frame(f, config.image_format) for f in overlays]


def _need(fields: Mapping[str, str], *names: str) -> list[str]:
    missing = [n for n in names if not fields.get(n)]
    if missing:
        raise ValueError("missing field(s): " + ", ".join(missing))
    return [fields[n] for n in names]


def _fmt_labels(labels) -> str:
    return ", ".join(f"[{k}]" for k in labels)


# --- stage 1 ----------------------------------------------------------------------

def run_stage1(video: VideoInput, backend: Backend, config: PipelineConfig = PipelineConfig()) -> Stage1Output:
    asker = _Asker(backend, config)
    tracks = {o.index_label: o.track for o in video.objects}
    captions = {}
    for obj in sorted(video.objects, key=lambda o: o.index_label):
        images = _images(video, tracks, SingleObject(obj.index_label), config)

        def parse(text):
            category, appearance, motion = _need(parse_fields(text), "category", "appearance", "motion")
            return ObjectCaption(obj.object_id, obj.index_label, category, appearance, motion)

        bindings = {"index": str(obj.index_label), "frame_count": str(len(images))}
        captions[obj.object_id] = asker.ask("stage1_object", bindings, parse, obj.object_id, images)
    return Stage1Output(captions)


# --- stage 2 ----------------------------------------------------------------------

def _similar_groups(captions: Sequence[ObjectCaption], threshold: float) -> list[list[ObjectCaption]]:
    """Connected components of objects whose motion texts overlap by token Jaccard."""
    n = len(captions)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    tokens = [set(content_tokens(c.motion)) for c in captions]
    for i in range(n):
        for j in range(i + 1, n):
            union = tokens[i] | tokens[j]
            if union and len(tokens[i] & tokens[j]) / len(union) >= threshold:
                parent[find(j)] = find(i)
    groups: dict[int, list[ObjectCaption]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(captions[i])
    return [g for g in groups.values() if len(g) >= 2]


def run_stage2(stage1: Stage1Output, backend: Backend, config: PipelineConfig = PipelineConfig()) -> Stage2Output:
    asker = _Asker(backend, config)
    ordered = sorted(stage1.captions.values(), key=lambda c: c.index_label)
    exprs = {}
    for cap in ordered:
        def parse(text, cap=cap):
            a, m, c = _need(parse_fields(text), "appearance-only", "motion-only", "combined")
            if any(has_index_token(x) for x in (a, m, c)):
                raise ValueError("expressions must not contain bracketed labels")
            return SingleExpressions(cap.object_id, cap.index_label, cap.category, a, m, c)

        bindings = {"category": cap.category, "appearance": cap.appearance, "motion": cap.motion}
        exprs[cap.object_id] = asker.ask("stage2_single", bindings, parse, cap.object_id)

    groups = []
    for candidates in _similar_groups(ordered, config.merge_similarity):
        by_label = {c.index_label: c for c in candidates}

        def parse(text, by_label=by_label):
            fields = parse_fields(text)
            decision = fields.get("merge", "").strip().lower()
            if decision.startswith("no"):
                return None
            if not decision.startswith("yes"):
                raise ValueError("Merge must be yes or no")
            chosen = parse_labels(fields.get("objects", "")) or tuple(sorted(by_label))
            unknown = [k for k in chosen if k not in by_label]
            if unknown:
                raise ValueError(f"unknown labels {_fmt_labels(unknown)}")
            if len(chosen) < 2:
                raise ValueError("a merge needs at least two objects")
            (text_,) = _need(fields, "expression")
            if has_index_token(text_):
                raise ValueError("the expression must not contain bracketed labels")
            return MergeGroup(tuple(sorted(by_label[k].object_id for k in chosen)), text_)

        listing = "\n".join(f"[{c.index_label}] {c.category}: {c.motion}" for c in candidates)
        item = "merge " + _fmt_labels(sorted(by_label))
        group = asker.ask("stage2_merge", {"objects": listing}, parse, item)
        if group is not None:
            groups.append(group)
    return Stage2Output(exprs, tuple(groups))


# --- stage 3 ----------------------------------------------------------------------

def reverse_roles(interaction: Interaction) -> Interaction:
    if interaction.direction is not Direction.UNIDIRECTIONAL:
        raise NotUnidirectional("only unidirectional interactions have roles to reverse")
    return Interaction(
        Direction.UNIDIRECTIONAL,
        interaction.target_indices,
        interaction.actor_indices,
        interaction.reversed_caption,
        interaction.forward_caption,
    )


def _parse_interactions(text: str, known: set[int]) -> list[dict]:
    """Parse the stage-3 reply into raw interaction records (reversed caption may be absent)."""
    if re.search(r"\bno\s+interactions?\b", text, re.IGNORECASE) and not INDEX_TOKEN.search(text):
        return []
    records = []
    for block in split_blocks(text):
        fields = parse_fields(block)
        caption = fields.get("caption", "")
        if not caption:
            # tolerate a bare caption sentence in place of the Caption field
            bare = [line.strip() for line in block.splitlines() if has_index_token(line) and ":" not in line]
            caption = bare[0] if bare else ""
        if not caption:
            raise ValueError("interaction block without a caption")
        kind = fields.get("type", "").lower()
        reversed_caption = fields.get("reversed") or None
        if not kind:
            kind = "bidirectional" if "participants" in fields and not reversed_caption else "unidirectional"
        mentioned = index_tokens(caption)
        if kind.startswith("uni"):
            actors = parse_labels(fields.get("actor", "")) or tuple(mentioned[:1])
            targets = parse_labels(fields.get("target", "")) or tuple(k for k in mentioned if k not in actors)
            if not actors or not targets:
                raise ValueError(f"cannot tell actor and target in {caption!r}")
            if set(actors) & set(targets):
                raise ValueError(f"actor and target overlap in {caption!r}")
            direction = Direction.UNIDIRECTIONAL
        elif kind.startswith("bi"):
            actors = parse_labels(fields.get("participants", "")) or tuple(mentioned)
            targets = ()
            reversed_caption = None
            if len(actors) < 2:
                raise ValueError(f"bidirectional interaction needs two participants: {caption!r}")
            direction = Direction.BIDIRECTIONAL
        else:
            raise ValueError(f"unknown interaction type {kind!r}")
        labels = set(actors) | set(targets) | set(mentioned)
        if reversed_caption:
            labels |= set(index_tokens(reversed_caption))
        unknown = sorted(labels - known)
        if unknown:
            raise ValueError(f"unknown labels {_fmt_labels(unknown)}")
        records.append(
            {
                "direction": direction,
                "actors": tuple(actors),
                "targets": tuple(targets),
                "caption": caption,
                "reversed": reversed_caption,
            }
        )
    if not records:
        raise ValueError("no interaction blocks and no 'No interactions' statement")
    return records


def _parse_reversed(text: str, forward: str) -> str:
    fields = parse_fields(text)
    rev = fields.get("reversed")
    if not rev:
        lines = [line.strip() for line in text.splitlines() if has_index_token(line)]
        rev = lines[0] if lines else ""
    if not rev:
        raise ValueError("missing Reversed line")
    if set(index_tokens(rev)) != set(index_tokens(forward)):
        raise ValueError("the reversed sentence must mention the same labels")
    return rev


def run_stage3(video: VideoInput, backend: Backend, config: PipelineConfig = PipelineConfig()) -> Stage3Output:
    labels = {o.index_label: o.object_id for o in video.objects}
    if len(labels) < 2:
        return Stage3Output((), labels)
    asker = _Asker(backend, config)
    tracks = {o.index_label: o.track for o in video.objects}
    images = _images(video, tracks, ALL_OBJECTS, config)
    bindings = {"labels": _fmt_labels(sorted(labels)), "frame_count": str(len(images))}
    records = asker.ask(
        "stage3_interaction", bindings, lambda t: _parse_interactions(t, set(labels)), f"{video.video_id} interactions", images
    )
    out = []
    seen_pairs = set()
    for rec in records:
        rev = rec["reversed"]
        if rec["direction"] is Direction.UNIDIRECTIONAL:
            if rev and set(index_tokens(rev)) != set(index_tokens(rec["caption"])):
                rev = None
            if not rev:
                subject = _fmt_labels(rec["targets"])
                rev = asker.ask(
                    "stage3_reverse",
                    {"caption": rec["caption"], "new_subject": subject},
                    lambda t, c=rec["caption"]: _parse_reversed(t, c),
                    f"{video.video_id} reverse",
                )
        inter = Interaction(rec["direction"], rec["actors"], rec["targets"], rec["caption"], rev)
        pair = frozenset(inter.participants)
        if pair in seen_pairs:
            log.warning("%s: more than one interaction among %s", video.video_id, _fmt_labels(sorted(pair)))
        seen_pairs.add(pair)
        out.append(inter)
    return Stage3Output(tuple(out), labels)


# --- stage 4 ----------------------------------------------------------------------

def substitute_indices(template: str, bindings: Mapping[int, str]) -> str:
    def sub(m):
        k = int(m.group(1))
        if k not in bindings:
            raise MissingBinding(k)
        return bindings[k]

    return INDEX_TOKEN.sub(sub, template)


def _descriptions(stage2: Stage2Output, level: Level) -> dict[int, str]:
    out = {}
    for e in stage2.expressions.values():
        out[e.index_label] = f"the {e.category}" if level is Level.CLASS else e.appearance_only
    return out


def run_stage4(
    stage2: Stage2Output,
    stage3: Stage3Output,
    backend: Backend,
    config: PipelineConfig = PipelineConfig(),
) -> Stage4Output:
    asker = _Asker(backend, config)
    label_to_oid = {e.index_label: e.object_id for e in stage2.expressions.values()}
    label_to_oid.update(stage3.labels)
    captions = []
    for i, inter in enumerate(stage3.interactions):
        variants = [("forward", inter)]
        if inter.direction is Direction.UNIDIRECTIONAL:
            variants.append(("reversed", reverse_roles(inter)))
        for level in (Level.CLASS, Level.APPEARANCE):
            desc = _descriptions(stage2, level)
            for role, view in variants:
                captions.append(_enrich(asker, i, role, level, view, desc, label_to_oid))
    return Stage4Output(tuple(captions))


def _enrich(asker, i, role, level, view: Interaction, desc, label_to_oid) -> EnrichedCaption:
    uni = view.direction is Direction.UNIDIRECTIONAL
    template = "stage4_unidirectional" if uni else "stage4_bidirectional"
    used = index_tokens(view.forward_caption)
    listing = "\n".join(f"[{k}]: {desc[k]}" for k in used if k in desc)
    missing = [k for k in used if k not in desc]
    if missing:
        raise MissingBinding(missing[0])

    def parse(text):
        fields = parse_fields(text)
        (expr,) = _need(fields, "expression")
        if has_index_token(expr):
            raise ValueError("the expression still contains bracketed labels")
        if uni:
            actors = set(parse_labels(fields.get("actor", "")))
            targets = set(parse_labels(fields.get("target", "")))
            if actors != set(view.actor_indices) or targets != set(view.target_indices):
                raise ValueError(
                    f"actor should be {_fmt_labels(view.actor_indices)} and target {_fmt_labels(view.target_indices)}"
                )
        return expr

    item = f"interaction {i} {role} {level.value}"
    try:
        text, fallback = asker.ask(template, {"caption": view.forward_caption, "descriptions": listing}, parse, item), False
    except ParseFailure as exc:
        log.info("%s: falling back to direct substitution (%s)", item, exc.reason)
        text, fallback = substitute_indices(view.forward_caption, desc), True
    return EnrichedCaption(
        interaction=i,
        role=role,
        level=level,
        direction=view.direction,
        text=text,
        actor_ids=tuple(sorted(label_to_oid[k] for k in view.actor_indices)),
        target_ids=tuple(sorted(label_to_oid[k] for k in view.target_indices)),
        fallback=fallback,
    )
