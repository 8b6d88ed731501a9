"""Prompt templates shipped as text files.

Templates live in ``interrvos/data/prompts/<template_id>.txt`` and use
``{{name}}`` placeholders, leaving single braces and ``[k]`` index tokens
untouched. A different directory can be supplied to revise prompts without
touching the package.
"""
from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from typing import Mapping

from ..errors import MissingBinding

PLACEHOLDER = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


def default_prompt_dir() -> Path:
    return Path(str(resources.files("interrvos") / "data" / "prompts"))


def load_template(template_id: str, prompt_dir=None) -> str:
    base = Path(prompt_dir) if prompt_dir else default_prompt_dir()
    path = base / f"{template_id}.txt"
    if not path.is_file():
        raise FileNotFoundError(f"no prompt template {template_id!r} in {base}")
    return path.read_text(encoding="utf-8")


def placeholders(template: str) -> list[str]:
    return sorted(set(PLACEHOLDER.findall(template)))


def fill(template: str, bindings: Mapping[str, str]) -> str:
    def sub(m):
        name = m.group(1)
        if name not in bindings:
            raise MissingBinding(name)
        return str(bindings[name])

    return PLACEHOLDER.sub(sub, template)


def render_prompt(template_id: str, bindings: Mapping[str, str], prompt_dir=None) -> str:
    return fill(load_template(template_id, prompt_dir), bindings)
