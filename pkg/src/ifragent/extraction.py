"""Intention-flow extraction: turn a user's demonstrations into SOP entries and habits."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .llm import ChatBackendConfig, ChatRequest, EmbedBackendConfig, chat, embed
from .model import Habit, HabitRepository, SupportTrajectory, UserProfile
from .prompts import (
    builtin_template,
    fill,
    parse_habit_lines,
    parse_numbered_steps,
    require_placeholders,
)
from .sop_library import SOPEntry, SOPStore


@dataclass(frozen=True)
class ExtractionConfig:
    chat_backend: ChatBackendConfig = field(default_factory=ChatBackendConfig)
    embed_backend: EmbedBackendConfig = field(default_factory=EmbedBackendConfig)
    explicit_prompt_template: str = field(default_factory=lambda: builtin_template("explicit"))
    implicit_prompt_template: str = field(default_factory=lambda: builtin_template("implicit"))
    # defaults to chat_backend when unset
    implicit_backend: Optional[ChatBackendConfig] = None

    def __post_init__(self) -> None:
        require_placeholders(self.explicit_prompt_template, ("query", "screenshots"), "explicit")
        require_placeholders(self.implicit_prompt_template, ("query", "screenshots", "habits"), "implicit")


class ExtractionError(RuntimeError):
    """A support trajectory failed; carries its position and the state reached before it."""

    def __init__(self, index: int, query: str, cause: Exception, profile: UserProfile):
        super().__init__(f"extraction failed on support trajectory {index + 1} ({query!r}): {cause}")
        self.index = index
        self.query = query
        self.cause = cause
        self.profile = profile


def _screens_note(t: SupportTrajectory) -> str:
    n = len(t.screenshots)
    return f"{n} screenshot{'s' if n != 1 else ''}"


def explicit_request(cfg: ExtractionConfig, t: SupportTrajectory) -> ChatRequest:
    text = fill(cfg.explicit_prompt_template, query=t.query, screenshots=_screens_note(t))
    b = cfg.chat_backend
    return ChatRequest.simple(text, t.screenshots, temperature=b.temperature, max_tokens=b.max_tokens)


def implicit_request(cfg: ExtractionConfig, h: HabitRepository, t: SupportTrajectory) -> ChatRequest:
    text = fill(
        cfg.implicit_prompt_template,
        query=t.query,
        screenshots=_screens_note(t),
        habits=h.serialize() or "(none yet)",
    )
    b = cfg.implicit_backend or cfg.chat_backend
    return ChatRequest.simple(text, t.screenshots, temperature=b.temperature, max_tokens=b.max_tokens)


def extract_explicit(cfg: ExtractionConfig, t: SupportTrajectory) -> list[str]:
    """Ask the explicit-flow agent for the demonstration's SOP, one step per numbered line."""
    return parse_numbered_steps(chat(cfg.chat_backend, explicit_request(cfg, t)))


def update_implicit(cfg: ExtractionConfig, h: HabitRepository, t: SupportTrajectory) -> HabitRepository:
    """Append whatever new habits the implicit-flow agent reports; existing entries are untouched."""
    raw = chat(cfg.implicit_backend or cfg.chat_backend, implicit_request(cfg, h, t))
    return h.extend([Habit(s, t.query) for s in parse_habit_lines(raw)])


def run_extraction(
    cfg: ExtractionConfig,
    store: SOPStore,
    user: UserProfile,
    support: Sequence[SupportTrajectory],
) -> tuple[SOPStore, UserProfile]:
    """Consume the support trajectories in order, adding one SOP entry and a habit delta per item.

    A failing trajectory aborts the run; entries from earlier trajectories stay in
    the store and the failing one contributes nothing.
    """
    for t in support:
        if t.user_id != user.user_id:
            raise ValueError(f"support trajectory {t.query!r} belongs to {t.user_id!r}, not {user.user_id!r}")

    for i, t in enumerate(support):
        try:
            sop = extract_explicit(cfg, t)
            vec = embed(cfg.embed_backend, t.query)
            habits = update_implicit(cfg, user.habits, t)
            store.insert(user.user_id, SOPEntry(t.query, vec, tuple(sop)))
        except Exception as exc:
            raise ExtractionError(i, t.query, exc, user) from exc
        user = replace(user, habits=habits)
    return store, user
