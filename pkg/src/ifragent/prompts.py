"""Prompt templates and the line grammars used to read model responses."""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

_NUMBERED = re.compile(r"^\s*(\d+)\s*[.)、]\s*(.*?)\s*$")
_BULLET = re.compile(r"^\s*[-*•]\s+(.*?)\s*$")


class ResponseParseError(ValueError):
    """A model response does not follow the expected grammar. ``raw`` holds the full text."""

    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}; raw response: {raw!r}")
        self.raw = raw


def builtin_template(name: str) -> str:
    return resources.files("ifragent").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


def load_template(path_or_name: str | Path) -> str:
    """Read a template from a file path, or a bundled template by bare name."""
    p = Path(path_or_name)
    if p.suffix or p.exists():
        return p.read_text(encoding="utf-8")
    return builtin_template(str(path_or_name))


def require_placeholders(template: str, names: tuple[str, ...], what: str) -> None:
    missing = [n for n in names if "{" + n + "}" not in template]
    if missing:
        raise ValueError(f"{what} template lacks placeholder(s): {', '.join('{' + m + '}' for m in missing)}")


def fill(template: str, **values: str) -> str:
    """Substitute ``{name}`` placeholders; other braces are left alone."""
    out = template
    for name, value in values.items():
        out = out.replace("{" + name + "}", value)
    return out


def format_steps(steps: list[str] | tuple[str, ...]) -> str:
    return "\n".join(f"{i}. {s}" for i, s in enumerate(steps, start=1))


def parse_numbered_steps(text: str) -> list[str]:
    steps = []
    for line in text.splitlines():
        m = _NUMBERED.match(line)
        if m and m.group(2):
            steps.append(m.group(2))
    if not steps:
        raise ResponseParseError("no numbered steps found", text)
    return steps


def parse_habit_lines(text: str) -> list[str]:
    """Bulleted or numbered lines of a habit response; anything else is ignored."""
    out = []
    for line in text.splitlines():
        m = _BULLET.match(line) or _NUMBERED.match(line)
        if m and m.group(m.lastindex):
            out.append(m.group(m.lastindex))
    return out


def parse_rewrite(text: str) -> tuple[str, list[str]]:
    """Split a rewriter response into its ``QUERY:`` line and the numbered SOP that follows."""
    lines = text.splitlines()
    for i, line in enumerate(lines):
        m = re.match(r"^\s*QUERY\s*[:：]\s*(.*?)\s*$", line, re.I)
        if m:
            query = m.group(1)
            if not query:
                raise ResponseParseError("empty QUERY line", text)
            try:
                steps = parse_numbered_steps("\n".join(lines[i + 1:]))
            except ResponseParseError:
                raise ResponseParseError("no numbered SOP after QUERY line", text) from None
            return query, steps
    raise ResponseParseError("missing QUERY: line", text)
