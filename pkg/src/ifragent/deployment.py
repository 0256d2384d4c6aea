"""Deployment: retrieve a demonstration, extract an SOP, personalize it, and ask the agent to act."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .grammar import Adapter, parse_action
from .llm import ChatBackendConfig, ChatRequest, EmbedBackendConfig, chat, embed
from .model import Action, HabitRepository, ScreenshotRef, UserProfile
from .prompts import (
    builtin_template,
    fill,
    format_steps,
    parse_numbered_steps,
    parse_rewrite,
    require_placeholders,
)
from .sop_library import SOPStore

Shot = tuple[str, Sequence[str]]


@dataclass(frozen=True)
class DeploymentConfig:
    k_shots: int = 1
    adapter: Adapter = Adapter.CANONICAL
    extractor_backend: ChatBackendConfig = field(default_factory=ChatBackendConfig)
    rewriter_backend: ChatBackendConfig = field(default_factory=ChatBackendConfig)
    agent_backend: ChatBackendConfig = field(default_factory=ChatBackendConfig)
    embed_backend: EmbedBackendConfig = field(default_factory=EmbedBackendConfig)
    extractor_prompt_template: str = field(default_factory=lambda: builtin_template("extractor"))
    rewriter_prompt_template: str = field(default_factory=lambda: builtin_template("rewriter"))
    # None selects the bundled template for ``adapter``
    agent_prompt_template: Optional[str] = None
    verbose: bool = False

    def __post_init__(self) -> None:
        if self.k_shots < 0:
            raise ValueError("k_shots must be >= 0")
        object.__setattr__(self, "adapter", Adapter(self.adapter))
        require_placeholders(self.extractor_prompt_template, ("demonstrations", "query"), "extractor")
        require_placeholders(self.rewriter_prompt_template, ("query", "sop", "habits"), "rewriter")
        require_placeholders(self.agent_template, ("query", "sop"), "agent")

    @property
    def agent_template(self) -> str:
        return self.agent_prompt_template or builtin_template(f"agent_{self.adapter.value}")


@dataclass(frozen=True)
class RewriteResult:
    rewritten_query: str
    rewritten_sop: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.rewritten_query or not self.rewritten_sop:
            raise ValueError("rewrite result needs a query and at least one SOP step")


@dataclass
class StepTrace:
    """Every intermediate value of one deployment step, for audit and replay."""

    user_id: str
    query: str
    retrieval_score: Optional[float] = None
    matched_query: Optional[str] = None
    shots: list[dict[str, Any]] = field(default_factory=list)
    sop: list[str] = field(default_factory=list)
    habits: str = ""
    rewritten_query: Optional[str] = None
    rewritten_sop: list[str] = field(default_factory=list)
    raw_action: Optional[str] = None
    action: Optional[dict[str, Any]] = None
    prompts: dict[str, str] = field(default_factory=dict)
    error: Optional[dict[str, str]] = None

    def to_dict(self, include_prompts: bool = False) -> dict[str, Any]:
        out = {
            "user_id": self.user_id,
            "query": self.query,
            "retrieval_score": self.retrieval_score,
            "matched_query": self.matched_query,
            "shots": self.shots,
            "sop": self.sop,
            "habits": self.habits,
            "rewritten_query": self.rewritten_query,
            "rewritten_sop": self.rewritten_sop,
            "raw_action": self.raw_action,
            "action": self.action,
            "error": self.error,
        }
        if include_prompts:
            out["prompts"] = self.prompts
        return out


class StageError(RuntimeError):
    """A pipeline stage failed. ``trace`` holds everything computed before the failure."""

    def __init__(self, stage: str, cause: Exception, trace: StepTrace):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.trace = trace


def _request(backend: ChatBackendConfig, text: str, images: Sequence[ScreenshotRef] = ()) -> ChatRequest:
    return ChatRequest.simple(text, images, temperature=backend.temperature, max_tokens=backend.max_tokens)


def demonstration_block(query: str, sop: Sequence[str]) -> str:
    return f"<demonstration>\nTask: {query}\nSOP:\n{format_steps(list(sop))}\n</demonstration>\n"


def extractor_prompt(cfg: DeploymentConfig, q: str, shots: Sequence[Shot]) -> str:
    demos = ""
    if shots:
        demos = "\nHere are procedures this user followed for similar tasks:\n\n"
        demos += "\n".join(demonstration_block(sq, sp) for sq, sp in shots)
    return fill(cfg.extractor_prompt_template, demonstrations=demos, query=q)


def extract_sop(cfg: DeploymentConfig, q: str, shots: Sequence[Shot]) -> list[str]:
    """Few-shot SOP extraction for ``q``; an empty ``shots`` list gives a zero-shot prompt."""
    if not q:
        raise ValueError("query must be nonempty")
    raw = chat(cfg.extractor_backend, _request(cfg.extractor_backend, extractor_prompt(cfg, q, shots)))
    return parse_numbered_steps(raw)


def rewriter_prompt(cfg: DeploymentConfig, q: str, p: Sequence[str], h: HabitRepository) -> str:
    return fill(
        cfg.rewriter_prompt_template,
        query=q,
        sop=format_steps(list(p)),
        habits=h.serialize() or "(none)",
    )


def rewrite(cfg: DeploymentConfig, q: str, p: Sequence[str], h: HabitRepository) -> RewriteResult:
    if not q or not p:
        raise ValueError("rewrite needs a nonempty query and SOP")
    raw = chat(cfg.rewriter_backend, _request(cfg.rewriter_backend, rewriter_prompt(cfg, q, p, h)))
    query, steps = parse_rewrite(raw)
    return RewriteResult(query, tuple(steps))


def agent_prompt(cfg: DeploymentConfig, q: str, p: Sequence[str]) -> str:
    return fill(cfg.agent_template, query=q, sop=format_steps(list(p)))


def act(cfg: DeploymentConfig, q: str, p: Sequence[str], s: ScreenshotRef) -> str:
    if not q or not p:
        raise ValueError("act needs a nonempty query and SOP")
    req = _request(cfg.agent_backend, agent_prompt(cfg, q, p), [s])
    return chat(cfg.agent_backend, req)


def select_shots(cfg: DeploymentConfig, store: SOPStore, user_id: str, vec) -> list:
    if cfg.k_shots == 1:
        hit = store.retrieve(user_id, vec)
        return [hit] if hit is not None else []
    return store.retrieve_top(user_id, vec, cfg.k_shots)


def run_step(
    cfg: DeploymentConfig,
    store: SOPStore,
    user: UserProfile,
    q: str,
    s: ScreenshotRef,
) -> tuple[Action, RewriteResult, StepTrace]:
    """One pass of the deployment pipeline for query ``q`` on screenshot ``s``.

    When nothing in the user's library clears the threshold, the extractor runs
    zero-shot and the rest of the pipeline proceeds unchanged.
    """
    trace = StepTrace(user_id=user.user_id, query=q, habits=user.habits.serialize())
    stage = "embed"
    try:
        vec = embed(cfg.embed_backend, q)

        stage = "retrieve"
        best = store.retrieve(user.user_id, vec)
        if best is not None:
            trace.retrieval_score = best.score
            trace.matched_query = best.query
        hits = select_shots(cfg, store, user.user_id, vec) if cfg.k_shots else []
        shots = [(h.query, list(h.sop)) for h in hits]
        trace.shots = [{"query": sq, "sop": sp, "score": h.score} for (sq, sp), h in zip(shots, hits)]

        stage = "extract_sop"
        if cfg.verbose:
            trace.prompts["extractor"] = extractor_prompt(cfg, q, shots)
        p = extract_sop(cfg, q, shots)
        trace.sop = p

        stage = "rewrite"
        if cfg.verbose:
            trace.prompts["rewriter"] = rewriter_prompt(cfg, q, p, user.habits)
        rewritten = rewrite(cfg, q, p, user.habits)
        trace.rewritten_query = rewritten.rewritten_query
        trace.rewritten_sop = list(rewritten.rewritten_sop)

        stage = "act"
        if cfg.verbose:
            trace.prompts["agent"] = agent_prompt(cfg, rewritten.rewritten_query, rewritten.rewritten_sop)
        raw = act(cfg, rewritten.rewritten_query, rewritten.rewritten_sop, s)
        trace.raw_action = raw

        stage = "parse_action"
        action = parse_action(cfg.adapter, raw, s)
        trace.action = action.to_dict()
    except Exception as exc:
        trace.error = {"stage": stage, "type": type(exc).__name__, "message": str(exc)}
        raise StageError(stage, exc, trace) from exc
    return action, rewritten, trace
