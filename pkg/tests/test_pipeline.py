import json

import numpy as np
import pytest
from conftest import box, merge_yes_reply, three_object_input, track_of
from hypothesis import given
from hypothesis import strategies as st

from interrvos.dataset import (
    Direction,
    ExpressionType,
    Level,
    ObjectAnnotation,
    validate_meta,
)
from interrvos.errors import (
    MissingBinding,
    NotUnidirectional,
    ParseFailure,
    ResolutionMismatch,
    SchemaViolation,
    UnknownIndex,
)
from interrvos.evaluation import Category, categorize
from interrvos.llm.client import MockBackend, ScriptedBackend
from interrvos.masks import BinaryMask, MaskTrack
from interrvos.pipeline import (
    ALL_OBJECTS,
    Backends,
    EnrichedCaption,
    Interaction,
    ObjectCaption,
    PipelineConfig,
    SingleExpressions,
    SingleObject,
    Stage1Output,
    Stage2Output,
    Stage3Output,
    Stage4Output,
    VideoInput,
    assemble_dataset,
    render_overlay,
    reverse_roles,
    run_pipeline,
    run_stage1,
    run_stage2,
    run_stage3,
    run_stage4,
    substitute_indices,
)
from interrvos.pipeline.overlay import color_for, glyph_box, sample_indices
from interrvos.pipeline.parsing import parse_fields, parse_labels
from interrvos.pipeline.runner import content_hash, stage_path

CFG = PipelineConfig(frames_per_request=2)


def objs(n, h=8, w=8):
    return [
        ObjectAnnotation(f"o{k}", k, "thing", track_of([box(h, w, 0, 2, 2 * k, 2 * k + 2)], h, w))
        for k in range(n)
    ]


def video(n=2):
    return VideoInput("v", 1, 8, 8, objs(n))


def caption(k, category="child", appearance="a child in a yellow coat", motion="leans on the wall"):
    return ObjectCaption(f"o{k}", k, category, appearance, motion)


# --- parsing ---------------------------------------------------------------------

def test_parse_fields_normalizes_names():
    fields = parse_fields("**Category**: dog\n- Appearance-only: brown fur\nmotion only: runs\nnoise")
    assert fields == {"category": "dog", "appearance-only": "brown fur", "motion-only": "runs"}
    assert parse_labels("[0], [2]") == (0, 2)
    assert parse_labels("1 and 3") == (1, 3)


# --- stage 1 ---------------------------------------------------------------------

def test_stage1_parses_reply():
    backend = ScriptedBackend(["Category: dog\nAppearance: brown fur\nMotion: runs left"])
    out = run_stage1(video(1), backend, CFG)
    cap = out.captions["o0"]
    assert (cap.category, cap.appearance, cap.motion) == ("dog", "brown fur", "runs left")
    assert backend.calls[0].images and backend.calls[0].tag == "stage1_object"


def test_stage1_reprompts_then_fails():
    bad = "Category: dog\nAppearance: brown fur"
    backend = ScriptedBackend([bad, bad])
    with pytest.raises(ParseFailure) as exc:
        run_stage1(video(1), backend, CFG)
    assert len(backend.calls) == 2
    assert "motion" in backend.calls[1].user_prompt.lower()
    assert exc.value.raw_text == bad


def test_stage1_recovers_after_reminder():
    backend = ScriptedBackend(["garbage", "Category: dog\nAppearance: fur\nMotion: sits"])
    assert run_stage1(video(1), backend, CFG).captions["o0"].motion == "sits"


def test_stage1_zero_objects():
    backend = ScriptedBackend([])
    assert run_stage1(VideoInput("v", 1, 8, 8, []), backend, CFG).captions == {}
    assert backend.calls == []


# --- stage 2 ---------------------------------------------------------------------

SINGLE = "Appearance-only: the child in yellow\nMotion-only: the child leaning\nCombined: the child in yellow leaning"


def test_stage2_single_object():
    out = run_stage2(Stage1Output({"o0": caption(0)}), ScriptedBackend([SINGLE]), CFG)
    e = out.expressions["o0"]
    assert len({e.appearance_only, e.motion_only, e.combined}) == 3
    assert out.merge_groups == ()


def test_stage2_merge_yes_and_no():
    s1 = Stage1Output({"o0": caption(0), "o1": caption(1)})
    merge = "Merge: yes\nObjects: [0], [1]\nExpression: the two children leaning on the wall"
    out = run_stage2(s1, ScriptedBackend([SINGLE, SINGLE, merge]), CFG)
    assert len(out.merge_groups) == 1
    assert out.merge_groups[0].object_ids == ("o0", "o1")
    out = run_stage2(s1, ScriptedBackend([SINGLE, SINGLE, "Merge: no"]), CFG)
    assert out.merge_groups == ()


def test_stage2_dissimilar_motion_not_asked():
    s1 = Stage1Output({"o0": caption(0), "o1": caption(1, motion="swims across the pool")})
    backend = ScriptedBackend([SINGLE, SINGLE])
    assert run_stage2(s1, backend, CFG).merge_groups == ()
    assert len(backend.calls) == 2


# --- stage 3 ---------------------------------------------------------------------

def test_stage3_unidirectional_example():
    reply = ("Type: unidirectional\nActor: [0]\nTarget: [2]\n"
             "Caption: Object [0] is leaning against object [2]\n"
             "Reversed: Object [2] is being leaned on by object [0]")
    out = run_stage3(VideoInput("v", 1, 8, 8, objs(3)), ScriptedBackend([reply]), CFG)
    (inter,) = out.interactions
    assert inter.direction is Direction.UNIDIRECTIONAL
    assert (inter.actor_indices, inter.target_indices) == ((0,), (2,))
    assert inter.reversed_caption == "Object [2] is being leaned on by object [0]"


def test_stage3_bidirectional_example():
    reply = ("Type: bidirectional\nParticipants: [0], [1]\n"
             "Caption: Object [0] and object [1] are standing together with arms around each other")
    (inter,) = run_stage3(video(2), ScriptedBackend([reply]), CFG).interactions
    assert inter.direction is Direction.BIDIRECTIONAL
    assert set(inter.participants) == {0, 1}
    assert inter.reversed_caption is None


def test_stage3_no_interactions():
    assert run_stage3(video(2), ScriptedBackend(["No interactions"]), CFG).interactions == ()


def test_stage3_asks_for_missing_reversal():
    reply = "Type: unidirectional\nActor: [0]\nTarget: [1]\nCaption: Object [0] pushes object [1]"
    backend = ScriptedBackend([reply, "Reversed: Object [1] is pushed by object [0]"])
    (inter,) = run_stage3(video(2), backend, CFG).interactions
    assert inter.reversed_caption == "Object [1] is pushed by object [0]"
    assert backend.calls[1].tag == "stage3_reverse"


def test_stage3_unknown_label_fails():
    reply = "Type: unidirectional\nActor: [0]\nTarget: [7]\nCaption: Object [0] pushes object [7]\nReversed: x [7] [0]"
    with pytest.raises(ParseFailure):
        run_stage3(video(2), ScriptedBackend([reply, reply]), CFG)


def test_stage3_keeps_duplicates(caplog):
    block = ("Type: unidirectional\nActor: [0]\nTarget: [1]\nCaption: Object [0] pushes object [1]\n"
             "Reversed: Object [1] is pushed by object [0]\n")
    out = run_stage3(video(2), ScriptedBackend([block + block]), CFG)
    assert len(out.interactions) == 2
    assert "more than one interaction" in caplog.text


def test_stage3_single_object_skips_backend():
    backend = ScriptedBackend([])
    assert run_stage3(video(1), backend, CFG).interactions == ()
    assert backend.calls == []


# --- role reversal ---------------------------------------------------------------

def test_reverse_roles_example():
    x = Interaction(Direction.UNIDIRECTIONAL, (0,), (2,), "Object [0] leans on object [2]",
                    "Object [2] is leaned on by object [0]")
    r = reverse_roles(x)
    assert (r.actor_indices, r.target_indices) == ((2,), (0,))
    assert r.forward_caption == x.reversed_caption
    assert reverse_roles(r) == x


def test_reverse_roles_rejects_bidirectional():
    x = Interaction(Direction.BIDIRECTIONAL, (0, 1), (), "Object [0] and object [1] dance")
    with pytest.raises(NotUnidirectional):
        reverse_roles(x)


@st.composite
def uni_interactions(draw):
    labels = draw(st.lists(st.integers(0, 20), min_size=2, max_size=6, unique=True))
    cut = draw(st.integers(1, len(labels) - 1))
    return Interaction(Direction.UNIDIRECTIONAL, tuple(labels[:cut]), tuple(labels[cut:]),
                       draw(st.text(min_size=1)), draw(st.text(min_size=1)))


@given(uni_interactions())
def test_reverse_roles_involution(x):
    assert reverse_roles(reverse_roles(x)) == x


# --- stage 4 ---------------------------------------------------------------------

def test_substitute_indices():
    text = substitute_indices("Object [0] is leaning against object [2]", {0: "the child", 2: "the wall"})
    assert text == "Object the child is leaning against object the wall"
    assert substitute_indices("no labels here", {}) == "no labels here"
    with pytest.raises(MissingBinding):
        substitute_indices("Object [3] waits", {0: "x"})


def leaning_stages():
    s2 = Stage2Output({
        "o0": SingleExpressions("o0", 0, "child", "the child in a yellow coat", "the leaning child", "c"),
        "o2": SingleExpressions("o2", 2, "wall", "the red brick wall", "the still wall", "w"),
    })
    inter = Interaction(Direction.UNIDIRECTIONAL, (0,), (2,), "Object [0] is leaning against object [2]",
                        "Object [2] is being leaned on by object [0]")
    return s2, Stage3Output((inter,), {0: "o0", 2: "o2"})


def test_stage4_enriches_both_levels():
    s2, s3 = leaning_stages()
    replies = [
        "Expression: the child leaning against the wall\nActor: [0]\nTarget: [2]",
        "Expression: the wall that the child leans on\nActor: [2]\nTarget: [0]",
        "Expression: the child in a yellow coat leaning against the red brick wall\nActor: [0]\nTarget: [2]",
        "Expression: the red brick wall leaned on by the child in a yellow coat\nActor: [2]\nTarget: [0]",
    ]
    out = run_stage4(s2, s3, ScriptedBackend(replies, vision=False), CFG)
    assert [(c.level, c.role) for c in out.captions] == [
        (Level.CLASS, "forward"), (Level.CLASS, "reversed"),
        (Level.APPEARANCE, "forward"), (Level.APPEARANCE, "reversed"),
    ]
    cls = out.captions[0]
    assert "child" in cls.text and "wall" in cls.text and "[" not in cls.text
    assert "yellow coat" in out.captions[2].text and "red brick wall" in out.captions[2].text
    assert (cls.actor_ids, cls.target_ids) == (("o0",), ("o2",))
    assert (out.captions[1].actor_ids, out.captions[1].target_ids) == (("o2",), ("o0",))
    assert not any(c.fallback for c in out.captions)


def test_stage4_fallback_after_two_bad_replies():
    s2, s3 = leaning_stages()
    bad = "Expression: the [0] leaning on [2]\nActor: [0]\nTarget: [2]"
    fwd = "Expression: fine\nActor: [0]\nTarget: [2]"
    rev = "Expression: fine\nActor: [2]\nTarget: [0]"
    backend = ScriptedBackend([bad, bad, rev, fwd, rev], vision=False)
    out = run_stage4(s2, s3, backend, CFG)
    first = out.captions[0]
    assert first.fallback
    assert first.text == "Object the child is leaning against object the wall"
    assert [c.fallback for c in out.captions[1:]] == [False, False, False]


def test_stage4_rejects_wrong_roles():
    s2, s3 = leaning_stages()
    swapped = "Expression: the wall near the child\nActor: [2]\nTarget: [0]"
    fwd = "Expression: ok\nActor: [0]\nTarget: [2]"
    backend = ScriptedBackend([swapped, swapped, swapped, fwd, swapped], vision=False)
    assert run_stage4(s2, s3, backend, CFG).captions[0].fallback


def test_stage4_output_rejects_index_tokens():
    cap = EnrichedCaption(0, "forward", Level.CLASS, Direction.BIDIRECTIONAL, "the [1] dog", ("a", "b"), ())
    with pytest.raises(ValueError):
        Stage4Output((cap,))


# --- overlay ---------------------------------------------------------------------

def grey(h=8, w=8):
    return np.full((h, w, 3), 100, dtype=np.uint8)


def test_overlay_empty_track_is_noop():
    frames = [grey()]
    out = render_overlay(frames, {0: MaskTrack.empty(1, 8, 8)})
    assert np.array_equal(out[0], frames[0])


def test_overlay_single_pixel():
    bits = np.zeros((8, 8), bool)
    bits[3, 4] = True
    out = render_overlay([grey()], {0: MaskTrack.from_masks([BinaryMask(bits)])})[0]
    changed = np.argwhere((out != grey()).any(axis=2))
    assert changed.tolist() == [[3, 4]]
    expected = np.rint(0.5 * 100 + 0.5 * np.array(color_for([0], 0))).astype(np.uint8)
    assert out[3, 4].tolist() == expected.tolist()


def test_overlay_three_colors():
    h, w = 40, 60
    tracks = {k: track_of([box(h, w, 2, 8, 2 + 20 * k, 8 + 20 * k)], h, w) for k in range(3)}
    out = render_overlay([np.zeros((h, w, 3), np.uint8)], tracks, ALL_OBJECTS)[0]
    colors = {tuple(out[4, 4 + 20 * k]) for k in range(3)}
    assert len(colors) == 3


def test_overlay_single_object_mode():
    h, w = 20, 20
    tracks = {0: track_of([box(h, w, 0, 5, 0, 5)], h, w), 1: track_of([box(h, w, 10, 15, 10, 15)], h, w)}
    out = render_overlay([grey(h, w)], tracks, SingleObject(1))[0]
    assert out[2, 2].tolist() == [100, 100, 100]
    assert out[12, 12].tolist() != [100, 100, 100]
    with pytest.raises(UnknownIndex):
        render_overlay([grey(h, w)], tracks, SingleObject(5))
    with pytest.raises(ResolutionMismatch):
        render_overlay([grey(8, 8)], tracks)


def test_overlay_label_drawn_on_large_masks():
    gw, gh = glyph_box("[0]")
    h, w = 4 * gh, 4 * gw
    track = track_of([box(h, w, 0, h, 0, w)], h, w)
    out = render_overlay([np.zeros((h, w, 3), np.uint8)], {0: track})[0]
    # glyphs are antialiased, so look for pixels brighter than the flat tint
    tint = out[0, 0].astype(int)
    assert (out.astype(int).sum(axis=2) > tint.sum() + 100).any()


def test_sample_indices():
    assert sample_indices(100, 8)[0] == 0 and sample_indices(100, 8)[-1] == 99
    assert len(sample_indices(100, 8)) == 8
    assert sample_indices(3, 8) == [0, 1, 2]


# --- assembly and end-to-end -----------------------------------------------------

def run_fixture(out_dir, stages=(1, 2, 3, 4), resume=False, responder=merge_yes_reply, workers=1):
    backend = MockBackend(responder=responder)
    return run_pipeline([three_object_input()], Backends(backend, backend), out_dir, stages,
                        CFG, resume, workers)


def test_three_object_census(tmp_path):
    meta = run_fixture(tmp_path)
    assert validate_meta(meta) == []
    exprs = list(meta.videos["clip0"].expressions.values())
    types = [e.type for e in exprs]
    assert sum(t.is_single for t in types) == 9
    assert types.count(ExpressionType.MULTI_INSTANCE) == 1
    inter = [e for e in exprs if e.type is ExpressionType.INTERACTION]
    assert len(inter) == 4 and len(exprs) == 14
    assert {e.interaction.level for e in inter} == {Level.CLASS, Level.APPEARANCE}
    for e in inter:
        partner = meta.videos["clip0"].expressions[e.interaction.pair_id]
        assert partner.interaction.pair_id == e.expression_id
        assert partner.interaction.actor_ids == e.interaction.target_ids
        assert partner.interaction.level == e.interaction.level
        assert categorize(e) is Category.ACTOR_TARGET
        assert "[" not in e.text


def test_end_to_end_byte_identical(tmp_path):
    run_fixture(tmp_path / "a")
    run_fixture(tmp_path / "b", workers=3)
    a = (tmp_path / "a" / "meta_expressions.json").read_bytes()
    b = (tmp_path / "b" / "meta_expressions.json").read_bytes()
    assert a == b
    for n in (1, 2, 3, 4):
        assert stage_path(tmp_path / "a", "clip0", n).read_bytes() == stage_path(tmp_path / "b", "clip0", n).read_bytes()


def test_later_stage_rerun_keeps_earlier_files(tmp_path):
    run_fixture(tmp_path)
    before = {n: content_hash(stage_path(tmp_path, "clip0", n)) for n in (1, 2, 3)}
    run_fixture(tmp_path, stages=(4,))
    assert before == {n: content_hash(stage_path(tmp_path, "clip0", n)) for n in (1, 2, 3)}


def test_partial_run_then_resume(tmp_path):
    assert run_fixture(tmp_path, stages=(1, 2)) is None
    assert not (tmp_path / "meta_expressions.json").exists()
    s1 = stage_path(tmp_path, "clip0", 1).read_bytes()

    def refuse_stage1(request):
        assert not request.tag.startswith("stage1"), "stage 1 should not run again"
        return merge_yes_reply(request)

    meta = run_fixture(tmp_path, resume=True, responder=refuse_stage1)
    assert meta is not None and stage_path(tmp_path, "clip0", 1).read_bytes() == s1


def test_no_interactions_gives_none():
    vin = three_object_input()
    s1 = Stage1Output({o.object_id: ObjectCaption(o.object_id, o.index_label, "object", "plain", "still")
                       for o in vin.objects})
    s2 = Stage2Output({o.object_id: SingleExpressions(o.object_id, o.index_label, "object", "a", "m", "c")
                       for o in vin.objects})
    meta = assemble_dataset(vin, s1, s2, Stage3Output(), Stage4Output())
    assert all(e.type is not ExpressionType.INTERACTION for e in meta.videos["clip0"].expressions.values())


def test_assembly_failure_names_stage():
    vin = three_object_input()
    s1 = Stage1Output({})
    s2 = Stage2Output({})
    bad = EnrichedCaption(0, "forward", Level.CLASS, Direction.UNIDIRECTIONAL, "x",
                          ("clip0_0",), ("clip0_0",))
    with pytest.raises(SchemaViolation) as exc:
        assemble_dataset(vin, s1, s2, Stage3Output(), Stage4Output((bad,)))
    assert exc.value.stage == "stage4"


def test_stage_files_roundtrip(tmp_path):
    run_fixture(tmp_path)
    from interrvos.pipeline.runner import load_stage

    for n in (1, 2, 3, 4):
        obj = load_stage(tmp_path, "clip0", n)
        text = json.dumps(obj.to_json(), indent=1, ensure_ascii=False) + "\n"
        assert text == stage_path(tmp_path, "clip0", n).read_text(encoding="utf-8")
