"""Domain types shared across the pipeline: actions, screenshots, trajectories, users."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional


class ActionKind(str, Enum):
    CLICK = "CLICK"
    TYPE = "TYPE"
    SCROLL = "SCROLL"
    PRESS_BACK = "PRESS_BACK"
    PRESS_HOME = "PRESS_HOME"
    WAIT = "WAIT"
    LONG_PRESS = "LONG_PRESS"
    COMPLETE = "COMPLETE"

    @classmethod
    def parse(cls, name: str) -> "ActionKind":
        """Look up a kind by its serialized name, accepting the ``COMPELTE`` spelling."""
        key = name.strip().upper()
        if key == "COMPELTE":
            key = "COMPLETE"
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown action kind: {name!r}") from None


class Direction(str, Enum):
    UP = "UP"
    DOWN = "DOWN"
    LEFT = "LEFT"
    RIGHT = "RIGHT"


class Language(str, Enum):
    EN = "EN"
    ZH = "ZH"


POINT_KINDS = frozenset({ActionKind.CLICK, ActionKind.LONG_PRESS})
PAYLOAD_FREE_KINDS = frozenset(
    {ActionKind.PRESS_BACK, ActionKind.PRESS_HOME, ActionKind.WAIT, ActionKind.COMPLETE}
)


@dataclass(frozen=True)
class Action:
    """A single GUI action. ``point`` is (x, y) as fractions of screen width/height."""

    kind: ActionKind
    point: Optional[tuple[float, float]] = None
    text: Optional[str] = None
    direction: Optional[Direction] = None

    @classmethod
    def click(cls, x: float, y: float) -> "Action":
        return cls(ActionKind.CLICK, point=(x, y))

    @classmethod
    def long_press(cls, x: float, y: float) -> "Action":
        return cls(ActionKind.LONG_PRESS, point=(x, y))

    @classmethod
    def type_text(cls, text: str) -> "Action":
        return cls(ActionKind.TYPE, text=text)

    @classmethod
    def scroll(cls, direction: Direction | str) -> "Action":
        return cls(ActionKind.SCROLL, direction=Direction(direction))

    @classmethod
    def simple(cls, kind: ActionKind | str) -> "Action":
        return cls(ActionKind.parse(kind) if isinstance(kind, str) else kind)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.point is not None:
            out["x"], out["y"] = self.point
        if self.text is not None:
            out["text"] = self.text
        if self.direction is not None:
            out["direction"] = self.direction.value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any], screen: "ScreenshotRef | None" = None) -> "Action":
        """Build an action from its JSON form.

        Points may be given as fractions (``x``/``y``) or as pixels (``px``/``py``);
        pixel points need ``screen`` to be converted.
        """
        if "kind" not in data:
            raise ValueError("action is missing 'kind'")
        kind = ActionKind.parse(str(data["kind"]))
        point = None
        if "x" in data or "y" in data:
            point = (float(data["x"]), float(data["y"]))
        elif "px" in data or "py" in data:
            if screen is None:
                raise ValueError("pixel coordinates need a screenshot to normalize against")
            point = (float(data["px"]) / screen.width, float(data["py"]) / screen.height)
        direction = Direction(str(data["direction"]).upper()) if "direction" in data else None
        action = cls(kind, point=point, text=data.get("text"), direction=direction)
        problem = validate_action(action)
        if problem is not None:
            raise ValueError(problem)
        return action


def validate_action(a: Action) -> Optional[str]:
    """Return ``None`` if the action's payload matches its kind, else a description of the violation."""
    if not isinstance(a.kind, ActionKind):
        return f"unknown action kind {a.kind!r}"
    if a.kind in PAYLOAD_FREE_KINDS:
        if a.point is not None or a.text is not None or a.direction is not None:
            return f"{a.kind.value} carries no payload"
        return None

    if a.kind in POINT_KINDS:
        if a.point is None:
            return f"point required for {a.kind.value}"
        if len(a.point) != 2:
            return f"point for {a.kind.value} must have two coordinates"
        for c in a.point:
            if isinstance(c, bool) or not isinstance(c, (int, float)) or not 0.0 <= c <= 1.0:
                return f"point coordinates for {a.kind.value} must be fractions in [0, 1]"
    elif a.point is not None:
        return f"point not allowed for {a.kind.value}"

    if a.kind is ActionKind.TYPE:
        if a.text is None:
            return "text required for TYPE"
        if not isinstance(a.text, str):
            return "text for TYPE must be a string"
    elif a.text is not None:
        return f"text not allowed for {a.kind.value}"

    if a.kind is ActionKind.SCROLL:
        if not isinstance(a.direction, Direction):
            return "direction required for SCROLL"
    elif a.direction is not None:
        return f"direction not allowed for {a.kind.value}"
    return None


def actions_equal(a: Action, b: Action) -> bool:
    """Exact structural equality: kind, point, text and direction all identical."""
    return (
        a.kind == b.kind
        and a.point == b.point
        and a.text == b.text
        and a.direction == b.direction
    )


@dataclass(frozen=True)
class ScreenshotRef:
    path: str
    width: int
    height: int
    step_index: int = 0

    def __post_init__(self) -> None:
        if not self.path:
            raise ValueError("screenshot path must be nonempty")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"screenshot dimensions must be positive, got {self.width}x{self.height}")
        if self.step_index < 0:
            raise ValueError("screenshot step_index must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "path": self.path,
            "width": self.width,
            "height": self.height,
            "step_index": self.step_index,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScreenshotRef":
        return cls(
            path=str(data["path"]),
            width=int(data["width"]),
            height=int(data["height"]),
            step_index=int(data.get("step_index", 0)),
        )


@dataclass(frozen=True)
class Step:
    screenshot: ScreenshotRef
    intent_aligned: Action
    ground_truth: tuple[Action, ...]

    def __post_init__(self) -> None:
        if not self.ground_truth:
            raise ValueError("ground_truth must contain at least one action")
        if not any(actions_equal(self.intent_aligned, g) for g in self.ground_truth):
            raise ValueError("intent_aligned action is not in ground_truth")


@dataclass(frozen=True)
class Trajectory:
    query: str
    steps: tuple[Step, ...]
    scenario: str
    user_id: str

    def __post_init__(self) -> None:
        if not self.query:
            raise ValueError("trajectory query must be nonempty")
        if not self.steps:
            raise ValueError("trajectory must have at least one step")


@dataclass(frozen=True)
class SupportTrajectory:
    """A demonstration: a query and its screenshots, with no action annotations."""

    query: str
    screenshots: tuple[ScreenshotRef, ...]
    scenario: str
    user_id: str

    def __post_init__(self) -> None:
        if not self.query:
            raise ValueError("support query must be nonempty")
        if not self.screenshots:
            raise ValueError("support trajectory must have at least one screenshot")


@dataclass(frozen=True)
class Habit:
    statement: str
    source_query: str


@dataclass(frozen=True)
class HabitRepository:
    """Append-only, ordered list of habit statements for one user."""

    entries: tuple[Habit, ...] = ()

    def extend(self, habits: list[Habit] | tuple[Habit, ...]) -> "HabitRepository":
        return HabitRepository(self.entries + tuple(habits))

    def __len__(self) -> int:
        return len(self.entries)

    def serialize(self) -> str:
        return "\n".join(f"- {h.statement}" for h in self.entries)

    def to_list(self) -> list[dict[str, str]]:
        return [{"statement": h.statement, "source_query": h.source_query} for h in self.entries]

    @classmethod
    def from_list(cls, items: list[dict[str, Any]]) -> "HabitRepository":
        return cls(tuple(Habit(str(i["statement"]), str(i["source_query"])) for i in items))


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    language: Language = Language.EN
    habits: HabitRepository = field(default_factory=HabitRepository)
