"""Deterministic stand-in replies for running the pipeline without a model.

The replies are built only from the request text, so a mock run is a pure
function of its inputs. They are placeholders: every object becomes a generic
"object", and the first two labels of a video are declared to interact.
"""
from __future__ import annotations

import re

from ..llm.client import LlmRequest
from .parsing import index_tokens, parse_fields, parse_labels


def _descriptions(prompt: str) -> dict[int, str]:
    out = {}
    for m in re.finditer(r"^\[(\d+)\]:\s*(.+)$", prompt, re.MULTILINE):
        out[int(m.group(1))] = m.group(2).strip()
    return out


def _substitute(caption: str, desc: dict[int, str]) -> str:
    return re.sub(r"\[(\d+)\]", lambda m: desc.get(int(m.group(1)), "something"), caption)


def synthetic_reply(request: LlmRequest) -> str:
    tag = request.tag
    prompt = request.user_prompt
    fields = parse_fields(prompt)
    if tag == "stage1_object":
        k = index_tokens(prompt)[0] if index_tokens(prompt) else 0
        return (
            "Category: object\n"
            f"Appearance: an object marked as number {k}\n"
            f"Motion: object number {k} stays in view"
        )
    if tag == "stage2_single":
        cat = fields.get("category", "object")
        return (
            f"Appearance-only: the {cat}, {fields.get('appearance', '')}\n"
            f"Motion-only: the {cat} that {fields.get('motion', '')}\n"
            f"Combined: the {cat}, {fields.get('appearance', '')}, that {fields.get('motion', '')}"
        )
    if tag == "stage2_merge":
        return "Merge: no\nObjects:\nExpression:"
    if tag == "stage3_interaction":
        labels = parse_labels(fields.get("labeled-objects-in-this-video", ""))
        if len(labels) < 2:
            return "No interactions"
        a, b = labels[:2]
        return (
            "Type: unidirectional\n"
            f"Actor: [{a}]\n"
            f"Target: [{b}]\n"
            f"Caption: Object [{a}] is approaching object [{b}]\n"
            f"Reversed: Object [{b}] is being approached by object [{a}]"
        )
    if tag == "stage3_reverse":
        caption = fields.get("sentence", "")
        labels = index_tokens(caption)
        if len(labels) >= 2:
            return f"Reversed: Object [{labels[1]}] is being approached by object [{labels[0]}]"
        return f"Reversed: {caption}"
    if tag in ("stage4_unidirectional", "stage4_bidirectional"):
        caption = fields.get("caption", "")
        desc = _descriptions(prompt)
        text = _substitute(caption, desc)
        if tag == "stage4_bidirectional":
            return f"Expression: {text}"
        labels = index_tokens(caption)
        actor, rest = labels[:1], labels[1:]
        return (
            f"Expression: {text}\n"
            f"Actor: {', '.join(f'[{k}]' for k in actor)}\n"
            f"Target: {', '.join(f'[{k}]' for k in rest)}"
        )
    return ""
