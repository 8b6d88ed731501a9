import dataclasses
import json
from functools import reduce
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from interrvos.dataset import (
    DatasetMeta,
    Direction,
    ExpressionType,
    InteractionInfo,
    dumps_meta,
    import_palette_pngs,
    load_meta,
    merged_gt_track,
    meta_from_json,
    role_gt_tracks,
    save_meta,
    validate_meta,
)
from interrvos.errors import ParseError, SchemaViolation, UnknownExpression
from interrvos.masks import BinaryMask, MaskTrack, mask_union

GOLDEN = Path(__file__).parent / "golden" / "meta_3videos.json"


def replace_expr(meta, vid, eid, **changes):
    video = meta.videos[vid]
    exprs = dict(video.expressions)
    exprs[eid] = dataclasses.replace(exprs[eid], **changes)
    videos = dict(meta.videos)
    videos[vid] = dataclasses.replace(video, expressions=exprs)
    return DatasetMeta(videos)


def rules(meta):
    return [v.rule for v in validate_meta(meta)]


def test_fixture_is_valid(meta3):
    assert validate_meta(meta3) == []


def test_roundtrip(tmp_path, meta3):
    path = tmp_path / "meta.json"
    save_meta(meta3, path)
    again = load_meta(path)
    assert again == meta3
    assert dumps_meta(again) == path.read_text(encoding="utf-8")


def test_golden_canonical_file(meta3):
    text = GOLDEN.read_text(encoding="utf-8")
    assert dumps_meta(meta3) == text
    # independent reload through the plain json module
    raw = json.loads(text)
    assert sorted(raw["videos"]) == ["v0", "v1", "v2"]
    assert meta_from_json(raw) == meta3


def test_minimal_file_loads(tmp_path):
    doc = {"videos": {"x": {
        "frame_count": 1, "height": 2, "width": 2, "frames": ["f0"],
        "objects": {"o": {"index_label": 0, "category": "cat", "appearance": "", "motion": "",
                          "track": {"0": {"size": [2, 2], "counts": [0, 4]}}}},
        "expressions": {"e": {"exp": "the cat", "type": "single_appearance",
                              "obj_ids": ["o"], "interaction": None}},
    }}}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    meta = load_meta(path)
    assert meta.find_expression("e")[1].text == "the cat"


def test_dangling_pair_id(tmp_path, meta):
    info = meta.videos["v0"].expressions["v0_i0"].interaction
    bad = replace_expr(meta, "v0", "v0_i0", interaction=dataclasses.replace(info, pair_id="nope"))
    path = tmp_path / "bad.json"
    save_meta(bad, path)
    with pytest.raises(SchemaViolation) as exc:
        load_meta(path)
    assert exc.value.rule == "pair_id unresolved"


def test_parse_error_location(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"videos": {"x": {"frame_count": "three"}}}')
    with pytest.raises(ParseError) as exc:
        load_meta(path)
    assert "x" in str(exc.value)
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_meta(path)


def test_uni_roles_overlap_is_one_violation(meta):
    info = meta.videos["v0"].expressions["v0_i2"].interaction
    oa, ob = "v0_a", "v0_b"
    bad = replace_expr(meta, "v0", "v0_i2", interaction=InteractionInfo(
        Direction.UNIDIRECTIONAL, (oa, ob), (ob,), None, info.level))
    assert rules(bad) == ["uni roles disjoint"]


def test_pair_role_swap_detected(meta):
    info = meta.videos["v0"].expressions["v0_i1"].interaction
    # partner keeps the same roles instead of swapping them
    bad = replace_expr(meta, "v0", "v0_i1", interaction=dataclasses.replace(
        info, actor_ids=("v0_a",), target_ids=("v0_b",)))
    assert "pair role swap" in rules(bad)


def test_pair_involution_detected(meta):
    info = meta.videos["v0"].expressions["v0_i1"].interaction
    bad = replace_expr(meta, "v0", "v0_i1", interaction=dataclasses.replace(info, pair_id=None))
    assert rules(bad) == ["pair involution"]


@pytest.mark.parametrize("eid, changes, rule", [
    ("v0_s0", {"object_ids": ("v0_a", "v0_b")}, "single object count"),
    ("v0_m0", {"object_ids": ("v0_a",)}, "multi object count"),
    ("v0_s0", {"object_ids": ("ghost",)}, "object unresolved"),
    ("v0_s1", {"type": ExpressionType.INTERACTION}, "interaction presence"),
])
def test_expression_mutations(meta, eid, changes, rule):
    assert rule in rules(replace_expr(meta, "v0", eid, **changes))


def test_bidirectional_rules(meta):
    info = meta.videos["v0"].expressions["v0_i2"].interaction
    with_target = replace_expr(meta, "v0", "v0_i2", interaction=dataclasses.replace(info, target_ids=("v0_b",)))
    assert "bi target empty" in rules(with_target)
    lonely = replace_expr(meta, "v0", "v0_i2", interaction=dataclasses.replace(info, actor_ids=("v0_a",)))
    assert "bi participants" in rules(lonely)


def test_merged_gt_single_and_union(meta):
    video = meta.videos["v0"]
    assert merged_gt_track(meta, "v0_s0") == video.objects["v0_a"].track
    merged = merged_gt_track(meta, "v0_m0")
    a, c = video.objects["v0_a"].track, video.objects["v0_c"].track
    for k in range(video.frame_count):
        assert merged.mask(k) == mask_union(a.mask(k), c.mask(k))
    with pytest.raises(UnknownExpression):
        merged_gt_track(meta, "missing")


def test_merged_gt_interaction_modes(meta):
    video = meta.videos["v0"]
    a, b = video.objects["v0_a"].track, video.objects["v0_b"].track
    assert merged_gt_track(meta, "v0_i0") == a.union(b)
    assert merged_gt_track(meta, "v0_i0", dual=True) == a
    assert role_gt_tracks(meta, "v0_i1") == (b, a)


def test_absent_frame_contributes_nothing():
    one = BinaryMask(np.eye(2, dtype=bool))
    a = MaskTrack.from_masks([one, None])
    b = MaskTrack.from_masks([None, None], 2, 2)
    u = a.union(b)
    assert u.mask(1).area == 0 and u.mask(0) == one


@settings(max_examples=50)
@given(st.permutations(range(4)), st.integers(0, 2**32 - 1))
def test_union_fold_order_free(order, seed):
    rng = np.random.default_rng(seed)
    tracks = [MaskTrack.from_masks([BinaryMask(rng.random((5, 5)) < 0.3) for _ in range(2)]) for _ in range(4)]
    fwd = reduce(MaskTrack.union, tracks)
    perm = reduce(MaskTrack.union, [tracks[i] for i in order])
    assert fwd == perm


def test_import_palette_pngs(tmp_path):
    vdir = tmp_path / "vid"
    vdir.mkdir()
    for k in range(2):
        arr = np.zeros((6, 8), dtype=np.uint8)
        arr[0:2, 0:2] = 1
        if k == 1:
            arr[4:6, 5:8] = 3
        im = Image.fromarray(arr, mode="P")
        im.putpalette([0, 0, 0, 255, 0, 0, 0, 255, 0, 0, 0, 255] + [0] * 756)
        im.save(vdir / f"{k:05d}.png")
    meta = import_palette_pngs(tmp_path, category="thing")
    video = meta.videos["vid"]
    assert video.frame_count == 2 and video.resolution == (6, 8)
    assert video.frames == ("00000", "00001")
    assert {o.index_label for o in video.objects.values()} == {0, 2}
    assert video.objects["2"].track.mask(0).area == 0
    assert video.objects["2"].track.mask(1).area == 6
    assert validate_meta(meta) == []
