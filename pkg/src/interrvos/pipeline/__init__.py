from .assemble import assemble_dataset, merge_metas
from .overlay import ALL_OBJECTS, SingleObject, palette, render_overlay
from .runner import Backends, run_pipeline, run_video, stage_path, video_inputs
from .stages import (
    EnrichedCaption,
    Interaction,
    MergeGroup,
    ObjectCaption,
    PipelineConfig,
    SingleExpressions,
    Stage1Output,
    Stage2Output,
    Stage3Output,
    Stage4Output,
    VideoInput,
    reverse_roles,
    run_stage1,
    run_stage2,
    run_stage3,
    run_stage4,
    substitute_indices,
)

__all__ = [
    "ALL_OBJECTS",
    "Backends",
    "EnrichedCaption",
    "Interaction",
    "MergeGroup",
    "ObjectCaption",
    "PipelineConfig",
    "SingleExpressions",
    "SingleObject",
    "Stage1Output",
    "Stage2Output",
    "Stage3Output",
    "Stage4Output",
    "VideoInput",
    "assemble_dataset",
    "merge_metas",
    "palette",
    "render_overlay",
    "reverse_roles",
    "run_pipeline",
    "run_stage1",
    "run_stage2",
    "run_stage3",
    "run_stage4",
    "run_video",
    "stage_path",
    "substitute_indices",
    "video_inputs",
]
