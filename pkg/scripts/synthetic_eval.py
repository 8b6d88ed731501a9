"""Score noisy predictions on a synthetic actor/target dataset.

Each video holds an actor box moving toward a static target box. Predictions
are the ground truth with boundary jitter and random flips, carrying separate
actor and target tracks for paired expressions. The script sweeps the noise
level and prints the full report in dual mode and the Actor-Target-only one.
"""
import argparse

import numpy as np

from interrvos.dataset import (
    DatasetMeta,
    Direction,
    Expression,
    ExpressionType,
    InteractionInfo,
    Level,
    ObjectAnnotation,
    Video,
    merged_gt_track,
    role_gt_tracks,
)
from interrvos.evaluation import (
    Category,
    EvalConfig,
    Prediction,
    categorize,
    evaluate,
    evaluate_dual,
    render_report,
)
from interrvos.masks import BinaryMask, MaskTrack


def box_mask(h, w, r, c, bh, bw):
    bits = np.zeros((h, w), bool)
    bits[max(r, 0):r + bh, max(c, 0):c + bw] = True
    return BinaryMask(bits)


def synthetic_video(vid, rng, frames=6, h=48, w=64):
    size = int(rng.integers(8, 14))
    row = int(rng.integers(4, h - size - 4))
    actor = [box_mask(h, w, row, 2 + 4 * t, size, size) for t in range(frames)]
    target = [box_mask(h, w, row, w - size - 2, size, size)] * frames
    objs = {
        f"{vid}_a": ObjectAnnotation(f"{vid}_a", 0, "person", MaskTrack.from_masks(actor)),
        f"{vid}_t": ObjectAnnotation(f"{vid}_t", 1, "door", MaskTrack.from_masks(target)),
    }
    a, t = f"{vid}_a", f"{vid}_t"
    exprs = {
        f"{vid}_0": Expression(f"{vid}_0", "the walking person", ExpressionType.SINGLE_MOTION, (a,)),
        f"{vid}_1": Expression(f"{vid}_1", "the door", ExpressionType.SINGLE_APPEARANCE, (t,)),
        f"{vid}_2": Expression(f"{vid}_2", "the person walking to the door", ExpressionType.INTERACTION, (a, t),
                               InteractionInfo(Direction.UNIDIRECTIONAL, (a,), (t,), f"{vid}_3", Level.CLASS)),
        f"{vid}_3": Expression(f"{vid}_3", "the door the person walks to", ExpressionType.INTERACTION, (a, t),
                               InteractionInfo(Direction.UNIDIRECTIONAL, (t,), (a,), f"{vid}_2", Level.CLASS)),
    }
    return Video(vid, frames, h, w, tuple(f"{k:05d}" for k in range(frames)), objs, exprs)


def perturb(track, rng, noise):
    out = []
    for m in track:
        bits = m.bits.copy()
        shift = int(rng.integers(-1, 2) * round(noise * 10))
        bits = np.roll(bits, shift, axis=1)
        bits ^= rng.random(bits.shape) < noise * 0.05
        out.append(BinaryMask(bits))
    return MaskTrack.from_masks(out)


def predictions(meta, rng, noise):
    preds = {}
    for _, e in meta.iter_expressions():
        eid = e.expression_id
        if categorize(e) is Category.ACTOR_TARGET:
            actor, target = role_gt_tracks(meta, eid)
            preds[eid] = Prediction(perturb(actor, rng, noise), perturb(target, rng, noise))
        else:
            preds[eid] = Prediction(perturb(merged_gt_track(meta, eid), rng, noise))
    return preds


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--videos", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.2, 0.5])
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    meta = DatasetMeta({f"s{i:03d}": synthetic_video(f"s{i:03d}", rng) for i in range(args.videos)})
    config = EvalConfig(workers=args.workers, dual=True)
    for noise in args.noise:
        preds = predictions(meta, np.random.default_rng(args.seed + 1), noise)
        print(render_report(evaluate(meta, preds, config), label=f"noise={noise:g}"))
        print(render_report(evaluate_dual(meta, preds, config), label=f"noise={noise:g}"))


if __name__ == "__main__":
    main()
