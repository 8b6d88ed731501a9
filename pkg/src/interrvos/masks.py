"""Binary masks, column-major run-length encoding, and boundary morphology.

All mask values are immutable: the backing numpy arrays are flagged
read-only on construction so masks can be shared between workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np
from scipy import ndimage

from .errors import CountSumMismatch, InvalidRle, ResolutionMismatch


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A single-frame foreground mask of shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask dimensions must be positive, got {arr.shape}")
        arr = np.array(arr, dtype=bool, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @classmethod
    def empty(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def any(self) -> bool:
        return bool(self.bits.any())

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.shape, self.bits.tobytes()))

    def __repr__(self):
        return f"BinaryMask({self.height}x{self.width}, area={self.area})"


@dataclass(frozen=True)
class RleMask:
    """Column-major run lengths, starting with a (possibly zero) background run."""

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.height < 1 or self.width < 1:
            raise InvalidRle(f"invalid size {self.height}x{self.width}")
        if any(c < 0 for c in self.counts):
            raise InvalidRle("negative run length")
        if any(c == 0 for c in self.counts[1:]):
            raise InvalidRle("zero run length after position 0")

    @property
    def size(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def area(self) -> int:
        return sum(self.counts[1::2])

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj: Mapping) -> "RleMask":
        try:
            height, width = obj["size"]
            counts = obj["counts"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidRle(f"malformed RLE object: {exc}") from None
        if not isinstance(counts, list) or not all(
            isinstance(c, int) and not isinstance(c, bool) for c in counts
        ):
            raise InvalidRle("counts must be a list of integers")
        rle = cls(int(height), int(width), tuple(counts))
        if sum(rle.counts) != rle.height * rle.width:
            raise CountSumMismatch(
                f"counts sum to {sum(rle.counts)}, expected {rle.height * rle.width}"
            )
        return rle


def rle_encode(mask: BinaryMask) -> RleMask:
    flat = mask.bits.ravel(order="F")
    # positions where the value flips; prepend a virtual background pixel
    padded = np.concatenate(([False], flat, [not flat[-1]]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    counts = np.diff(np.concatenate(([0], edges)))
    return RleMask(mask.height, mask.width, tuple(counts.tolist()))


def rle_decode(rle: RleMask) -> BinaryMask:
    h, w = rle.height, rle.width
    total = sum(rle.counts)
    if total != h * w:
        raise CountSumMismatch(f"counts sum to {total}, expected {h * w}")
    values = np.zeros(len(rle.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, rle.counts)
    return BinaryMask(flat.reshape((h, w), order="F"))


def _check_same(a: BinaryMask, b: BinaryMask) -> None:
    if a.shape != b.shape:
        raise ResolutionMismatch(f"{a.shape} vs {b.shape}")


def mask_union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same(a, b)
    return BinaryMask(a.bits | b.bits)


def mask_intersection(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same(a, b)
    return BinaryMask(a.bits & b.bits)


def boundary_pixels(mask: BinaryMask) -> BinaryMask:
    """Foreground pixels with a background 4-neighbour; outside the image is background."""
    m = np.pad(mask.bits, 1, constant_values=False)
    core = m[1:-1, 1:-1]
    interior = m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    return BinaryMask(core & ~interior)


@lru_cache(maxsize=64)
def disc_footprint(radius: float) -> np.ndarray:
    """Boolean footprint of all integer offsets within Euclidean distance ``radius``."""
    r = int(math.floor(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    fp = (yy * yy + xx * xx) <= radius * radius
    fp.setflags(write=False)
    return fp


def dilate_disc(mask: BinaryMask, radius: float) -> BinaryMask:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius < 1 or not mask.any():
        return mask
    h, w = mask.shape
    if radius * radius >= (h - 1) ** 2 + (w - 1) ** 2:
        return BinaryMask.full(h, w)
    # offsets larger than the image cannot change the result
    radius = min(radius, math.hypot(h, w))
    out = ndimage.binary_dilation(mask.bits, structure=disc_footprint(radius), border_value=0)
    return BinaryMask(out)


@dataclass(frozen=True)
class MaskTrack:
    """Per-object mask sequence; frames missing from ``masks`` are empty."""

    frame_count: int
    height: int
    width: int
    masks: Mapping[int, RleMask] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for idx in sorted(self.masks):
            rle = self.masks[idx]
            if not 0 <= idx < self.frame_count:
                raise ValueError(f"frame index {idx} outside [0, {self.frame_count})")
            if rle.size != (self.height, self.width):
                raise ResolutionMismatch(
                    f"frame {idx} mask is {rle.size}, track is {(self.height, self.width)}"
                )
            clean[int(idx)] = rle
        object.__setattr__(self, "masks", clean)

    @classmethod
    def from_masks(cls, frames: Iterable[BinaryMask | None], height=None, width=None) -> "MaskTrack":
        frames = list(frames)
        stored = {}
        for i, m in enumerate(frames):
            if m is None:
                continue
            height, width = m.shape
            if m.any():
                stored[i] = rle_encode(m)
        if height is None:
            raise ValueError("resolution required for a track with no masks")
        return cls(len(frames), height, width, stored)

    @classmethod
    def empty(cls, frame_count: int, height: int, width: int) -> "MaskTrack":
        return cls(frame_count, height, width, {})

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.height, self.width)

    def mask(self, index: int) -> BinaryMask:
        if not 0 <= index < self.frame_count:
            raise IndexError(index)
        rle = self.masks.get(index)
        if rle is None:
            return BinaryMask.empty(self.height, self.width)
        return rle_decode(rle)

    def __iter__(self):
        for i in range(self.frame_count):
            yield self.mask(i)

    def __len__(self):
        return self.frame_count

    def union(self, other: "MaskTrack") -> "MaskTrack":
        if self.resolution != other.resolution:
            raise ResolutionMismatch(f"{self.resolution} vs {other.resolution}")
        if self.frame_count != other.frame_count:
            raise ValueError("tracks differ in frame count")
        merged = {}
        for idx in sorted(set(self.masks) | set(other.masks)):
            a, b = self.masks.get(idx), other.masks.get(idx)
            if a is None or b is None:
                merged[idx] = a or b
            else:
                merged[idx] = rle_encode(mask_union(rle_decode(a), rle_decode(b)))
        return MaskTrack(self.frame_count, self.height, self.width, merged)

    def to_json(self) -> dict:
        return {str(i): rle.to_json() for i, rle in self.masks.items()}

    @classmethod
    def from_json(cls, obj: Mapping, frame_count: int, height: int, width: int) -> "MaskTrack":
        masks = {}
        for key, value in obj.items():
            try:
                idx = int(key)
            except (TypeError, ValueError):
                raise InvalidRle(f"frame key {key!r} is not an integer") from None
            masks[idx] = RleMask.from_json(value)
        return cls(frame_count, height, width, masks)
