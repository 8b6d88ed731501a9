"""Run all four annotation stages on a generated clip with the mock backend.

Writes per-stage JSON files and the assembled meta under --out, then prints
the validation result and the dataset statistics. No model is contacted.
"""
import argparse
from pathlib import Path

import numpy as np

from interrvos.dataset import ObjectAnnotation, validate_meta
from interrvos.llm.client import MockBackend
from interrvos.masks import BinaryMask, MaskTrack
from interrvos.pipeline import Backends, PipelineConfig, VideoInput, run_pipeline
from interrvos.pipeline.synthetic import synthetic_reply
from interrvos.stats import compute_stats, render_stats


def clip(vid, frames=12, h=60, w=80):
    def track(r0, c0, size, dx):
        masks = []
        for t in range(frames):
            bits = np.zeros((h, w), bool)
            c = c0 + dx * t
            bits[r0:r0 + size, c:c + size] = True
            masks.append(BinaryMask(bits))
        return MaskTrack.from_masks(masks)

    objects = [
        ObjectAnnotation(f"{vid}_dog", 0, "dog", track(30, 4, 14, 3)),
        ObjectAnnotation(f"{vid}_ball", 1, "ball", track(36, 60, 8, 0)),
        ObjectAnnotation(f"{vid}_tree", 2, "tree", track(2, 30, 20, 0)),
    ]
    rng = np.random.default_rng(0)
    frames_rgb = [rng.integers(60, 200, size=(h, w, 3), dtype=np.uint8) for _ in range(frames)]
    return VideoInput(vid, frames, h, w, objects, frames_rgb)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/mock_demo")
    ap.add_argument("--videos", type=int, default=2)
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args()

    backend = MockBackend(responder=synthetic_reply, max_concurrency=4)
    videos = [clip(f"demo{i}") for i in range(args.videos)]
    meta = run_pipeline(videos, Backends(backend, backend), args.out,
                        config=PipelineConfig(frames_per_request=4), workers=args.workers)
    print(f"wrote {Path(args.out) / 'meta_expressions.json'}")
    print(f"{len(validate_meta(meta))} violations")
    print(f"backend: {backend.telemetry.requests} requests, max {backend.telemetry.max_in_flight} in flight\n")
    print(render_stats(compute_stats(meta), top_words=10))


if __name__ == "__main__":
    main()
