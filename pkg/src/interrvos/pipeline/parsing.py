"""Parsers for the line-oriented reply formats requested by the prompts."""
from __future__ import annotations

import re

INDEX_TOKEN = re.compile(r"\[(\d+)\]")
_FIELD = re.compile(r"^\s*(?:[-*]\s*)?\**\s*([A-Za-z][A-Za-z \-]*?)\s*\**\s*:\s*(.*?)\s*$")


def normalize_name(name: str) -> str:
    return re.sub(r"[\s_\-]+", "-", name.strip().lower())


def parse_fields(text: str) -> dict[str, str]:
    """Collect ``Name: value`` lines; later duplicates are ignored."""
    out: dict[str, str] = {}
    for line in text.splitlines():
        m = _FIELD.match(line)
        if not m:
            continue
        key = normalize_name(m.group(1))
        value = m.group(2).strip().strip("*").strip()
        out.setdefault(key, _strip_quotes(value))
    return out


def _strip_quotes(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1].strip()
    return value


def parse_labels(value: str) -> tuple[int, ...]:
    """``"[0], [2]"`` -> ``(0, 2)``; bare integers are accepted as well."""
    labels = [int(x) for x in INDEX_TOKEN.findall(value)]
    if not labels:
        labels = [int(x) for x in re.findall(r"\b\d+\b", value)]
    return tuple(dict.fromkeys(labels))


def index_tokens(text: str) -> list[int]:
    """Labels in order of first appearance."""
    return list(dict.fromkeys(int(x) for x in INDEX_TOKEN.findall(text)))


def has_index_token(text: str) -> bool:
    return INDEX_TOKEN.search(text) is not None


def split_blocks(text: str, start_key: str = "type") -> list[str]:
    """Split a reply into blocks, each beginning at a ``start_key:`` line.

    Falls back to blank-line separation when no such key appears.
    """
    lines = text.splitlines()
    starts = [
        i for i, line in enumerate(lines)
        if (m := _FIELD.match(line)) and normalize_name(m.group(1)) == start_key
    ]
    if not starts:
        return [b for b in re.split(r"\n\s*\n", text) if b.strip()]
    blocks = []
    for a, b in zip(starts, starts[1:] + [len(lines)]):
        blocks.append("\n".join(lines[a:b]))
    # a caption line appearing before the first Type line belongs to it
    if starts[0] > 0:
        blocks[0] = "\n".join(lines[: starts[0]]) + "\n" + blocks[0]
    return blocks
