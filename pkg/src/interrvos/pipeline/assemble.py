"""Turn stage artifacts into a validated DatasetMeta."""
from __future__ import annotations

from ..dataset import (
    DatasetMeta,
    Direction,
    Expression,
    ExpressionType,
    InteractionInfo,
    ObjectAnnotation,
    Video,
    validate_meta,
)
from ..errors import SchemaViolation
from .stages import Stage1Output, Stage2Output, Stage3Output, Stage4Output, VideoInput


def assemble_dataset(
    video: VideoInput,
    stage1: Stage1Output,
    stage2: Stage2Output,
    stage3: Stage3Output,
    stage4: Stage4Output,
    frame_names=(),
) -> DatasetMeta:
    """Build a one-video DatasetMeta.

    Expression ids are ``<video_id>_<nnn>`` in emission order: three single
    expressions per object (by index label), then merge groups, then
    interaction captions in stage-4 order. Forward and reversed captions of
    one unidirectional interaction at one level point at each other via
    ``pair_id``.
    """
    vid = video.video_id
    objects = {}
    for obj in video.objects:
        cap = stage1.captions.get(obj.object_id)
        objects[obj.object_id] = ObjectAnnotation(
            object_id=obj.object_id,
            index_label=obj.index_label,
            category=cap.category if cap else obj.category,
            appearance=cap.appearance if cap else obj.appearance,
            motion=cap.motion if cap else obj.motion,
            track=obj.track,
        )

    exprs: dict[str, Expression] = {}
    provenance: dict[str, str] = {}
    counter = iter(range(10**6))

    def new_id(stage: str) -> str:
        eid = f"{vid}_{next(counter):03d}"
        provenance[eid] = stage
        return eid

    for single in sorted(stage2.expressions.values(), key=lambda e: e.index_label):
        for etype, text in (
            (ExpressionType.SINGLE_APPEARANCE_MOTION, single.combined),
            (ExpressionType.SINGLE_APPEARANCE, single.appearance_only),
            (ExpressionType.SINGLE_MOTION, single.motion_only),
        ):
            eid = new_id("stage2")
            exprs[eid] = Expression(eid, text, etype, (single.object_id,))
    for group in stage2.merge_groups:
        eid = new_id("stage2")
        exprs[eid] = Expression(eid, group.text, ExpressionType.MULTI_INSTANCE, tuple(sorted(group.object_ids)))

    ids = [new_id("stage4") for _ in stage4.captions]
    partner: dict[int, int] = {}
    slots = {}
    for n, cap in enumerate(stage4.captions):
        if cap.direction is Direction.UNIDIRECTIONAL:
            slots.setdefault((cap.interaction, cap.level), []).append(n)
    for members in slots.values():
        if len(members) == 2:
            a, b = members
            partner[a], partner[b] = b, a
    for n, cap in enumerate(stage4.captions):
        pair = ids[partner[n]] if n in partner else None
        info = InteractionInfo(cap.direction, cap.actor_ids, cap.target_ids, pair, cap.level)
        exprs[ids[n]] = Expression(ids[n], cap.text, ExpressionType.INTERACTION, info.participants, info)

    meta = DatasetMeta(
        {
            vid: Video(
                video_id=vid,
                frame_count=video.frame_count,
                height=video.height,
                width=video.width,
                frames=tuple(frame_names),
                objects=objects,
                expressions=exprs,
            )
        }
    )
    violations = validate_meta(meta)
    if violations:
        v = violations[0]
        raise SchemaViolation(v.rule, v.location, stage=provenance.get(v.item_id, "assemble"))
    return meta


def merge_metas(metas) -> DatasetMeta:
    videos = {}
    for meta in metas:
        for vid, video in meta.videos.items():
            if vid in videos:
                raise ValueError(f"video {vid} appears twice")
            videos[vid] = video
    return DatasetMeta(videos)
