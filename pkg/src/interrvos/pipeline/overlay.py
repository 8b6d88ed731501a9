"""Colored, labeled mask overlays used as visual prompts."""
from __future__ import annotations

import colorsys
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from ..errors import ResolutionMismatch, UnknownIndex
from ..masks import MaskTrack

ALPHA = 0.5
PALETTE_SIZE = 12


def palette(n: int = PALETTE_SIZE) -> list[tuple[int, int, int]]:
    """``n`` evenly spaced, fully saturated hues."""
    out = []
    for i in range(n):
        r, g, b = colorsys.hsv_to_rgb(i / n, 1.0, 1.0)
        out.append((round(r * 255), round(g * 255), round(b * 255)))
    return out


@dataclass(frozen=True)
class SingleObject:
    index: int


ALL_OBJECTS = "all"


def color_for(labels: Sequence[int], label: int) -> tuple[int, int, int]:
    # rank in sorted label order, so labels 0, 5, 9 still get distinct hues
    rank = sorted(labels).index(label)
    colors = palette()
    # step through hues so neighbouring ranks differ strongly
    return colors[(rank * 5) % PALETTE_SIZE]


def _font():
    return ImageFont.load_default()


def label_text(label: int) -> str:
    return f"[{label}]"


def glyph_box(text: str) -> tuple[int, int]:
    draw = ImageDraw.Draw(Image.new("RGB", (1, 1)))
    left, top, right, bottom = draw.textbbox((0, 0), text, font=_font())
    return right - left, bottom - top


def render_overlay(
    frames: Sequence[np.ndarray],
    tracks: Mapping[int, MaskTrack],
    mode=ALL_OBJECTS,
    frame_indices: Sequence[int] | None = None,
) -> list[np.ndarray]:
    """Blend each object's mask into the frames and write its label at the centroid.

    ``frames`` are HxWx3 uint8 arrays; ``frame_indices`` gives the track frame
    each one corresponds to (defaults to 0..n-1). Labels are drawn only where
    the mask area is at least the glyph's bounding-box area.
    """
    if frame_indices is None:
        frame_indices = range(len(frames))
    frame_indices = list(frame_indices)
    if len(frame_indices) != len(frames):
        raise ValueError("frame_indices must match frames")
    labels = sorted(tracks)
    if isinstance(mode, SingleObject):
        if mode.index not in tracks:
            raise UnknownIndex(mode.index)
        chosen = [mode.index]
    else:
        chosen = labels
    out = []
    for frame, fidx in zip(frames, frame_indices):
        frame = np.asarray(frame)
        if frame.ndim != 3 or frame.shape[2] != 3:
            raise ValueError(f"expected HxWx3 frame, got {frame.shape}")
        h, w = frame.shape[:2]
        result = frame.astype(np.float64)
        to_label = []
        for label in chosen:
            track = tracks[label]
            if track.resolution != (h, w):
                raise ResolutionMismatch(f"track {label} is {track.resolution}, frame is {(h, w)}")
            if fidx >= track.frame_count or fidx not in track.masks:
                continue
            mask = track.mask(fidx).bits
            color = np.array(color_for(labels, label), dtype=np.float64)
            result[mask] = (1 - ALPHA) * result[mask] + ALPHA * color
            to_label.append((label, mask))
        result = np.rint(result).astype(np.uint8)
        if to_label:
            image = Image.fromarray(result)
            draw = ImageDraw.Draw(image)
            for label, mask in to_label:
                text = label_text(label)
                gw, gh = glyph_box(text)
                if mask.sum() < gw * gh:
                    continue
                ys, xs = np.nonzero(mask)
                cy, cx = ys.mean(), xs.mean()
                draw.text((cx - gw / 2, cy - gh / 2), text, fill=(255, 255, 255), font=_font())
            result = np.asarray(image)
        out.append(result)
    return out


def encode_frame(frame: np.ndarray, fmt: str = "png") -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(frame, dtype=np.uint8)).save(buf, format=fmt.upper())
    return buf.getvalue()


def sample_indices(frame_count: int, k: int) -> list[int]:
    """``k`` evenly spaced frame indices covering the first and last frame."""
    if frame_count < 1:
        return []
    if k >= frame_count:
        return list(range(frame_count))
    if k == 1:
        return [0]
    return sorted({round(i * (frame_count - 1) / (k - 1)) for i in range(k)})
