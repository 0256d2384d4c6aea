"""Loading, validating and saving datasets; SFT record export for the query rewriter."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable

from .model import (
    Action,
    HabitRepository,
    Language,
    ScreenshotRef,
    Step,
    SupportTrajectory,
    Trajectory,
    UserProfile,
    actions_equal,
)


class DatasetError(ValueError):
    """A dataset file is malformed or violates a domain invariant."""


class SchemaError(DatasetError):
    pass


class InvariantError(DatasetError):
    pass


@dataclass(frozen=True)
class Dataset:
    users: tuple[UserProfile, ...]
    support: tuple[SupportTrajectory, ...]
    test: tuple[Trajectory, ...]

    def user(self, user_id: str) -> UserProfile:
        for u in self.users:
            if u.user_id == user_id:
                return u
        raise KeyError(user_id)

    def support_for(self, user_id: str) -> list[SupportTrajectory]:
        return [t for t in self.support if t.user_id == user_id]


def step_key(t: Trajectory, step: Step) -> tuple[str, str, int]:
    """Join key used for predictions and traces."""
    return (t.user_id, t.query, step.screenshot.step_index)


def _require(obj: dict[str, Any], key: str, where: str) -> Any:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    if key not in obj:
        raise SchemaError(f"{where}: missing field '{key}'")
    return obj[key]


def _parse_screenshot(raw: Any, where: str) -> ScreenshotRef:
    for key in ("path", "width", "height"):
        _require(raw, key, where)
    try:
        return ScreenshotRef.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _parse_action(raw: Any, screen: ScreenshotRef, where: str) -> Action:
    if not isinstance(raw, dict):
        raise SchemaError(f"{where}: expected an action object")
    try:
        return Action.from_dict(raw, screen)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _parse_user(raw: Any, where: str) -> UserProfile:
    user_id = _require(raw, "user_id", where)
    try:
        language = Language(str(raw.get("language", "EN")).upper())
    except ValueError:
        raise SchemaError(f"{where}: unknown language {raw.get('language')!r}") from None
    try:
        habits = HabitRepository.from_list(raw.get("habits", []))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{where}.habits: malformed entry ({exc})") from None
    return UserProfile(str(user_id), language, habits)


def _parse_support(raw: Any, where: str) -> SupportTrajectory:
    shots_raw = _require(raw, "screenshots", where)
    if not isinstance(shots_raw, list) or not shots_raw:
        raise SchemaError(f"{where}.screenshots: expected a nonempty list")
    shots = tuple(_parse_screenshot(s, f"{where}.screenshots[{i}]") for i, s in enumerate(shots_raw))
    query = str(_require(raw, "query", where))
    if not query:
        raise SchemaError(f"{where}.query: must be nonempty")
    return SupportTrajectory(
        query=query,
        screenshots=shots,
        scenario=str(raw.get("scenario", "")),
        user_id=str(_require(raw, "user_id", where)),
    )


def _parse_test(raw: Any, where: str) -> Trajectory:
    steps_raw = _require(raw, "steps", where)
    if not isinstance(steps_raw, list) or not steps_raw:
        raise SchemaError(f"{where}.steps: expected a nonempty list")
    query = str(_require(raw, "query", where))
    if not query:
        raise SchemaError(f"{where}.query: must be nonempty")
    steps = []
    seen_idx = set()
    for i, s in enumerate(steps_raw):
        sw = f"{where}.steps[{i}]"
        screen = _parse_screenshot(_require(s, "screenshot", sw), f"{sw}.screenshot")
        if screen.step_index in seen_idx:
            raise InvariantError(f"{sw}: duplicate step_index {screen.step_index}")
        seen_idx.add(screen.step_index)
        intent = _parse_action(_require(s, "intent_aligned", sw), screen, f"{sw}.intent_aligned")
        gt_raw = _require(s, "ground_truth", sw)
        if not isinstance(gt_raw, list) or not gt_raw:
            raise SchemaError(f"{sw}.ground_truth: expected a nonempty list")
        gt = tuple(_parse_action(g, screen, f"{sw}.ground_truth[{j}]") for j, g in enumerate(gt_raw))
        if not any(actions_equal(intent, g) for g in gt):
            raise InvariantError(f"{sw}: intent_aligned action is not in ground_truth")
        steps.append(Step(screen, intent, gt))
    return Trajectory(
        query=query,
        steps=tuple(steps),
        scenario=str(raw.get("scenario", "")),
        user_id=str(_require(raw, "user_id", where)),
    )


def dataset_from_dict(doc: Any) -> Dataset:
    if not isinstance(doc, dict):
        raise SchemaError("dataset: expected a JSON object at top level")
    sections = {}
    for name in ("users", "support", "test"):
        value = doc.get(name, [])
        if not isinstance(value, list):
            raise SchemaError(f"dataset: '{name}' must be a list")
        sections[name] = value

    users = tuple(_parse_user(u, f"users[{i}]") for i, u in enumerate(sections["users"]))
    ids = [u.user_id for u in users]
    if len(set(ids)) != len(ids):
        raise InvariantError("users: duplicate user_id")
    known = set(ids)

    support = tuple(_parse_support(t, f"support[{i}]") for i, t in enumerate(sections["support"]))
    test = tuple(_parse_test(t, f"test[{i}]") for i, t in enumerate(sections["test"]))

    for section, items in (("support", support), ("test", test)):
        for i, t in enumerate(items):
            if t.user_id not in known:
                raise SchemaError(f"{section}[{i}]: unknown user_id {t.user_id!r}")

    support_keys = {(t.user_id, t.query) for t in support}
    test_keys: set[tuple[str, str]] = set()
    for i, t in enumerate(test):
        key = (t.user_id, t.query)
        if key in support_keys:
            raise InvariantError(f"test[{i}]: query {t.query!r} also appears in the support set")
        if key in test_keys:
            raise InvariantError(f"test[{i}]: duplicate test query {t.query!r} for user {t.user_id!r}")
        test_keys.add(key)
    return Dataset(users, support, test)


def load_dataset(path: str | Path) -> Dataset:
    """Read and fully validate a dataset file.

    Raises ``OSError`` on I/O failure, :class:`SchemaError` for structural problems
    (the message names the record and field) and :class:`InvariantError` when a
    domain rule such as "intent-aligned action is one of the ground-truth actions"
    is broken.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"dataset: invalid JSON ({exc})") from None
    return dataset_from_dict(doc)


def dataset_to_dict(d: Dataset) -> dict[str, Any]:
    return {
        "users": [
            {"user_id": u.user_id, "language": u.language.value, "habits": u.habits.to_list()}
            for u in d.users
        ],
        "support": [
            {
                "user_id": t.user_id,
                "scenario": t.scenario,
                "query": t.query,
                "screenshots": [s.to_dict() for s in t.screenshots],
            }
            for t in d.support
        ],
        "test": [
            {
                "user_id": t.user_id,
                "scenario": t.scenario,
                "query": t.query,
                "steps": [
                    {
                        "screenshot": s.screenshot.to_dict(),
                        "intent_aligned": s.intent_aligned.to_dict(),
                        "ground_truth": [g.to_dict() for g in s.ground_truth],
                    }
                    for s in t.steps
                ],
            }
            for t in d.test
        ],
    }


def dumps_canonical(obj: Any, indent: int | None = 2) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=indent)


def save_dataset(d: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps_canonical(dataset_to_dict(d)) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SftRecord:
    """One warm-up sample for the query rewriter: inputs (query, sop, habits) and targets."""

    query: str
    sop: str
    habits: str
    rewritten_query: str
    rewritten_sop: str

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f"SFT record field '{f.name}' must be a nonempty string")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SftRecord":
        missing = [f.name for f in fields(cls) if f.name not in data]
        if missing:
            raise ValueError(f"SFT record is missing field '{missing[0]}'")
        record = cls(**{f.name: data[f.name] for f in fields(cls)})
        record.validate()
        return record

    def to_dict(self) -> dict[str, str]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def export_sft(records: Iterable[SftRecord], path: str | Path) -> None:
    records = list(records)
    if not records:
        raise ValueError("empty SFT export")
    for i, r in enumerate(records):
        try:
            r.validate()
        except ValueError as exc:
            raise ValueError(f"record {i}: {exc}") from None
    lines = [dumps_canonical(r.to_dict(), indent=None) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_sft(path: str | Path) -> list[SftRecord]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(SftRecord.from_dict(json.loads(line)))
        except (ValueError, TypeError) as exc:
            raise ValueError(f"line {n}: {exc}") from None
    return out
