"""Interaction-aware referring video object segmentation: dataset building and evaluation."""

from .dataset import (
    DatasetMeta,
    Expression,
    ExpressionType,
    load_meta,
    save_meta,
    validate_meta,
)
from .evaluation import EvalConfig, evaluate, evaluate_dual, render_report
from .masks import BinaryMask, MaskTrack, RleMask, rle_decode, rle_encode
from .metrics import boundary_f, dice_coefficient, jaccard, jf_score

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "DatasetMeta",
    "EvalConfig",
    "Expression",
    "ExpressionType",
    "MaskTrack",
    "RleMask",
    "boundary_f",
    "dice_coefficient",
    "evaluate",
    "evaluate_dual",
    "jaccard",
    "jf_score",
    "load_meta",
    "render_report",
    "rle_decode",
    "rle_encode",
    "save_meta",
    "validate_meta",
]
