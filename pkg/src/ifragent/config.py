"""Run configuration: one JSON file plus environment-variable overrides for credentials.

Layout::

    {
      "backend":   {...},                  # defaults shared by every chat role
      "backends":  {"explicit": {...}, "implicit": {...},
                    "extractor": {...}, "rewriter": {...}, "agent": {...}},
      "embedding": {"kind": "hash", "dim": 64, "seed": 0},
      "tau": 0.5, "k_shots": 1, "adapter": "canonical",
      "prompts":   {"explicit": "path.txt", ...},
      "policy":    {"click_rel_err": 0.14, "text_sim_min": 0.8}
    }

A mock backend's ``script`` or ``rules`` may be a path to a JSON file instead of
inline data.  Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .deployment import DeploymentConfig
from .extraction import ExtractionConfig
from .grammar import Adapter
from .llm import ChatBackendConfig, EmbedBackendConfig
from .metrics import MatchPolicy
from .prompts import load_template
from .sop_library import DEFAULT_TAU

CHAT_ROLES = ("explicit", "implicit", "extractor", "rewriter", "agent")

ENV_CHAT = {
    "IFRAGENT_API_BASE": ("url", str),
    "IFRAGENT_API_KEY": ("api_key", str),
    "IFRAGENT_MODEL": ("model", str),
    "IFRAGENT_TIMEOUT": ("timeout", float),
    "IFRAGENT_RETRIES": ("retries", int),
}
ENV_EMBED = {
    "IFRAGENT_EMBED_URL": ("url", str),
    "IFRAGENT_API_KEY": ("api_key", str),
    "IFRAGENT_EMBED_MODEL": ("model", str),
    "IFRAGENT_TIMEOUT": ("timeout", float),
    "IFRAGENT_RETRIES": ("retries", int),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AppConfig:
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    deployment: DeploymentConfig = field(default_factory=DeploymentConfig)
    embedding: EmbedBackendConfig = field(default_factory=EmbedBackendConfig)
    tau: float = DEFAULT_TAU
    policy: MatchPolicy = field(default_factory=MatchPolicy)

    @property
    def dim(self) -> int:
        return self.embedding.dim


def _env_overrides(table: Mapping[str, tuple[str, type]], env: Mapping[str, str]) -> dict[str, Any]:
    out = {}
    for var, (key, cast) in table.items():
        if env.get(var):
            try:
                out[key] = cast(env[var])
            except ValueError:
                raise ConfigError(f"environment variable {var} has an invalid value") from None
    return out


def _resolve_mock_files(raw: dict[str, Any], base: Path) -> dict[str, Any]:
    raw = dict(raw)
    for key in ("script", "rules"):
        if isinstance(raw.get(key), str):
            path = base / raw[key]
            try:
                raw[key] = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read mock {key} file {path}: {exc}") from None
    return raw


def _chat_backend(raw: dict[str, Any], base: Path, env: Mapping[str, str], verbose: bool) -> ChatBackendConfig:
    raw = _resolve_mock_files(raw, base)
    if raw.get("kind", "mock") == "http":
        raw.update(_env_overrides(ENV_CHAT, env))
    if verbose:
        raw["verbose"] = True
    try:
        return ChatBackendConfig.from_dict(raw)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"chat backend: {exc}") from None


def config_from_dict(
    doc: Mapping[str, Any],
    base: Path | str = ".",
    env: Optional[Mapping[str, str]] = None,
    verbose: bool = False,
) -> AppConfig:
    base = Path(base)
    env = os.environ if env is None else env
    default = dict(doc.get("backend", {}))
    roles = doc.get("backends", {})
    unknown = set(roles) - set(CHAT_ROLES)
    if unknown:
        raise ConfigError(f"unknown backend role(s): {', '.join(sorted(unknown))}")
    chat = {r: _chat_backend({**default, **roles.get(r, {})}, base, env, verbose) for r in CHAT_ROLES}

    emb_raw = dict(doc.get("embedding", {}))
    if emb_raw.get("kind", "hash") == "http":
        emb_raw.update(_env_overrides(ENV_EMBED, env))
    if verbose:
        emb_raw["verbose"] = True
    try:
        embedding = EmbedBackendConfig.from_dict(emb_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"embedding backend: {exc}") from None

    prompts = {}
    for name, path in doc.get("prompts", {}).items():
        try:
            prompts[name] = load_template(base / path)
        except OSError as exc:
            raise ConfigError(f"cannot read {name} prompt template: {exc}") from None

    try:
        extraction = ExtractionConfig(
            chat_backend=chat["explicit"],
            implicit_backend=chat["implicit"],
            embed_backend=embedding,
            **{f"{k}_prompt_template": prompts[k] for k in ("explicit", "implicit") if k in prompts},
        )
        deployment = DeploymentConfig(
            k_shots=int(doc.get("k_shots", 1)),
            adapter=Adapter(doc.get("adapter", "canonical")),
            extractor_backend=chat["extractor"],
            rewriter_backend=chat["rewriter"],
            agent_backend=chat["agent"],
            embed_backend=embedding,
            verbose=verbose,
            **{f"{k}_prompt_template": prompts[k] for k in ("extractor", "rewriter", "agent") if k in prompts},
        )
        policy = MatchPolicy(**doc.get("policy", {}))
        tau = float(doc.get("tau", DEFAULT_TAU))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if not -1.0 <= tau <= 1.0:
        raise ConfigError("tau must lie in [-1, 1]")
    return AppConfig(extraction, deployment, embedding, tau, policy)


def load_config(path: str | Path | None, env: Optional[Mapping[str, str]] = None,
                verbose: bool = False) -> AppConfig:
    if path is None:
        return config_from_dict({}, env=env, verbose=verbose)
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(doc, path.parent, env, verbose)


def with_overrides(cfg: AppConfig, tau: Optional[float] = None, k_shots: Optional[int] = None,
                   policy: Optional[Mapping[str, Any]] = None) -> AppConfig:
    if tau is not None:
        if not -1.0 <= tau <= 1.0:
            raise ConfigError("tau must lie in [-1, 1]")
        cfg = replace(cfg, tau=tau)
    if k_shots is not None:
        cfg = replace(cfg, deployment=replace(cfg.deployment, k_shots=k_shots))
    if policy:
        cfg = replace(cfg, policy=replace(cfg.policy, **policy))
    return cfg
