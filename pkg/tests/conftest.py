import numpy as np
import pytest
from hypothesis import settings

from interrvos.dataset import (
    DatasetMeta,
    Direction,
    Expression,
    ExpressionType,
    InteractionInfo,
    Level,
    ObjectAnnotation,
    Video,
)
from interrvos.masks import BinaryMask, MaskTrack

# wall-clock deadlines make property tests flaky on slow machines
settings.register_profile("repo", deadline=None)
settings.load_profile("repo")


def box(h, w, r0, r1, c0, c1):
    bits = np.zeros((h, w), dtype=bool)
    bits[r0:r1, c0:c1] = True
    return BinaryMask(bits)


def track_of(masks, h, w):
    return MaskTrack.from_masks(masks, h, w)


def make_video(vid="v0", frames=2, h=16, w=16):
    """Three objects in separated corners plus one expression of each kind.

    Object a (label 0) is the actor and b (label 1) the target of a paired
    unidirectional interaction; a and c (label 2) form a bidirectional one.
    """
    a = track_of([box(h, w, 1, 5, 1, 5)] * frames, h, w)
    b = track_of([box(h, w, 10, 15, 10, 15)] * frames, h, w)
    c = track_of([box(h, w, 1, 4, 11, 15)] * frames, h, w)
    objects = {
        f"{vid}_a": ObjectAnnotation(f"{vid}_a", 0, "person", a, "a red shirt", "walks"),
        f"{vid}_b": ObjectAnnotation(f"{vid}_b", 1, "cart", b, "a blue cart", "is pushed"),
        f"{vid}_c": ObjectAnnotation(f"{vid}_c", 2, "dog", c, "a small dog", "sits"),
    }
    oa, ob, oc = f"{vid}_a", f"{vid}_b", f"{vid}_c"
    e = {}

    def add(eid, text, etype, oids, info=None):
        e[eid] = Expression(eid, text, etype, oids, info)

    add(f"{vid}_s0", "the person in red", ExpressionType.SINGLE_APPEARANCE, (oa,))
    add(f"{vid}_s1", "the thing being pushed", ExpressionType.SINGLE_MOTION, (ob,))
    add(f"{vid}_s2", "the small dog sitting", ExpressionType.SINGLE_APPEARANCE_MOTION, (oc,))
    add(f"{vid}_m0", "the person and the dog", ExpressionType.MULTI_INSTANCE, (oa, oc))
    add(
        f"{vid}_i0", "the person pushing the cart", ExpressionType.INTERACTION, (oa, ob),
        InteractionInfo(Direction.UNIDIRECTIONAL, (oa,), (ob,), f"{vid}_i1", Level.CLASS),
    )
    add(
        f"{vid}_i1", "the cart pushed by the person", ExpressionType.INTERACTION, (oa, ob),
        InteractionInfo(Direction.UNIDIRECTIONAL, (ob,), (oa,), f"{vid}_i0", Level.CLASS),
    )
    add(
        f"{vid}_i2", "the person and the dog playing together", ExpressionType.INTERACTION, (oa, oc),
        InteractionInfo(Direction.BIDIRECTIONAL, (oa, oc), (), None, Level.APPEARANCE),
    )
    return Video(vid, frames, h, w, tuple(f"{i:05d}" for i in range(frames)), objects, e)


def make_meta(n_videos=1, **kw):
    return DatasetMeta({f"v{i}": make_video(f"v{i}", **kw) for i in range(n_videos)})


@pytest.fixture
def meta():
    return make_meta(1)


@pytest.fixture
def meta3():
    return make_meta(3)


def random_mask(rng, max_side=32, min_side=1, density=None):
    h = int(rng.integers(min_side, max_side + 1))
    w = int(rng.integers(min_side, max_side + 1))
    p = rng.uniform(0.05, 0.95) if density is None else density
    return BinaryMask(rng.random((h, w)) < p)


# --- annotation pipeline fixture -------------------------------------------------

def three_object_input(vid="clip0", frames=4, h=24, w=32):
    """Track-only input: three separated boxes, the middle one moving right."""
    from interrvos.pipeline import VideoInput

    specs = [
        ("0", lambda t: box(h, w, 2, 8, 2, 8)),
        ("1", lambda t: box(h, w, 14, 20, 4 + 2 * t, 10 + 2 * t)),
        ("2", lambda t: box(h, w, 2, 10, 22, 30)),
    ]
    objects = []
    for label, (oid, mk) in enumerate(specs):
        track = track_of([mk(t) for t in range(frames)], h, w)
        objects.append(ObjectAnnotation(f"{vid}_{oid}", label, "object", track))
    return VideoInput(vid, frames, h, w, objects)


def merge_yes_reply(request):
    """The synthetic replies, except that objects [1] and [2] are merged."""
    from interrvos.pipeline.synthetic import synthetic_reply

    if request.tag == "stage2_merge":
        return "Merge: yes\nObjects: [1], [2]\nExpression: the two objects that stay in view"
    return synthetic_reply(request)


# --- acceptance reporting --------------------------------------------------------

def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
