"""Parse agent output text into :class:`Action` values, and render actions back to text.

Each adapter declares the syntax its agent emits and the basis its coordinates
are expressed in:

=========  =====================================================  ============
adapter    syntax                                                 coordinates
=========  =====================================================  ============
canonical  ``CLICK(x, y)``, ``TYPE("hi")``, ``SCROLL(UP)``, ...   pixels
uitars     ``click(start_box='(x,y)')``, ``type(content='hi')``   0-1000
osatlas    ``CLICK <point>[[x, y]]</point>``, ``TYPE [hi]``       0-1000
qwenvl     ``<tool_call>{"name": "mobile_use", ...}</tool_call>``  pixels
=========  =====================================================  ============
"""

from __future__ import annotations

import json
import re
from enum import Enum

from .model import Action, ActionKind, Direction, ScreenshotRef


class Adapter(str, Enum):
    CANONICAL = "canonical"
    UITARS = "uitars"
    OSATLAS = "osatlas"
    QWENVL = "qwenvl"


PIXEL = "pixel"
THOUSANDTHS = "thousandths"

COORDINATE_BASIS = {
    Adapter.CANONICAL: PIXEL,
    Adapter.UITARS: THOUSANDTHS,
    Adapter.OSATLAS: THOUSANDTHS,
    Adapter.QWENVL: PIXEL,
}


class ActionParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(f"{message} in {raw!r}")
        self.raw = raw


class UnrecognizedAction(ActionParseError):
    pass


class MalformedArguments(ActionParseError):
    pass


class CoordinateOutOfRange(ActionParseError):
    pass


_NUM = r"-?\d+(?:\.\d+)?"


def _to_fraction(x: float, y: float, adapter: Adapter, screen: ScreenshotRef, raw: str) -> tuple[float, float]:
    if COORDINATE_BASIS[adapter] == PIXEL:
        w, h = screen.width, screen.height
    else:
        w = h = 1000
    if not (0 <= x <= w and 0 <= y <= h):
        raise CoordinateOutOfRange(f"point ({x:g}, {y:g}) outside {w}x{h} {COORDINATE_BASIS[adapter]} basis", raw)
    return (x / w, y / h)


def _from_fraction(point: tuple[float, float], adapter: Adapter, screen: ScreenshotRef) -> tuple[int, int]:
    if COORDINATE_BASIS[adapter] == PIXEL:
        w, h = screen.width, screen.height
    else:
        w = h = 1000
    return (round(point[0] * w), round(point[1] * h))


def _direction(token: str, raw: str) -> Direction:
    try:
        return Direction(token.strip().strip("'\"").upper())
    except ValueError:
        raise MalformedArguments(f"unknown scroll direction {token!r}", raw) from None


def _numbers(text: str) -> list[float]:
    return [float(n) for n in re.findall(_NUM, text)]


# -- canonical -------------------------------------------------------------------

_CALL = re.compile(r"^([A-Za-z_]+)\s*\((.*)\)$", re.S)


def _parse_canonical(raw: str, screen: ScreenshotRef) -> Action:
    lines = [ln.strip() for ln in raw.strip().splitlines() if ln.strip()]
    if not lines:
        raise MalformedArguments("empty action", raw)
    line = re.sub(r"^(?:action|answer)\s*:\s*", "", lines[-1], flags=re.I)
    m = _CALL.match(line)
    if not m:
        raise MalformedArguments("expected NAME(args)", raw)
    name, args = m.group(1), m.group(2).strip()
    try:
        kind = ActionKind.parse(name)
    except ValueError:
        raise UnrecognizedAction(f"unrecognized action {name!r}", raw) from None

    if kind in (ActionKind.CLICK, ActionKind.LONG_PRESS):
        am = re.fullmatch(rf"\s*({_NUM})\s*,\s*({_NUM})\s*", args)
        if not am:
            raise MalformedArguments(f"{kind.value} expects two numbers", raw)
        x, y = _to_fraction(float(am.group(1)), float(am.group(2)), Adapter.CANONICAL, screen, raw)
        return Action(kind, point=(x, y))
    if kind is ActionKind.TYPE:
        try:
            text = json.loads(args)
        except ValueError:
            text = None
        if not isinstance(text, str):
            raise MalformedArguments('TYPE expects one double-quoted string', raw)
        return Action.type_text(text)
    if kind is ActionKind.SCROLL:
        if not re.fullmatch(r"\s*['\"]?\w+['\"]?\s*", args):
            raise MalformedArguments("SCROLL expects a direction", raw)
        return Action.scroll(_direction(args, raw))
    if args:
        raise MalformedArguments(f"{kind.value} takes no arguments", raw)
    return Action(kind)


def _render_canonical(a: Action, screen: ScreenshotRef) -> str:
    if a.point is not None:
        x, y = _from_fraction(a.point, Adapter.CANONICAL, screen)
        return f"{a.kind.value}({x}, {y})"
    if a.kind is ActionKind.TYPE:
        return f"TYPE({json.dumps(a.text, ensure_ascii=False)})"
    if a.kind is ActionKind.SCROLL:
        return f"SCROLL({a.direction.value})"
    return f"{a.kind.value}()"


# -- UI-TARS -----------------------------------------------------------------------

_UITARS_KW = re.compile(r"(\w+)\s*=\s*(?:'((?:[^'\\]|\\.)*)'|\"((?:[^\"\\]|\\.)*)\")", re.S)
_UITARS_NAMES = {
    "click": ActionKind.CLICK,
    "left_single": ActionKind.CLICK,
    "long_press": ActionKind.LONG_PRESS,
    "type": ActionKind.TYPE,
    "scroll": ActionKind.SCROLL,
    "press_back": ActionKind.PRESS_BACK,
    "press_home": ActionKind.PRESS_HOME,
    "wait": ActionKind.WAIT,
    "finished": ActionKind.COMPLETE,
}


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), s)


def _parse_uitars(raw: str, screen: ScreenshotRef) -> Action:
    text = raw.strip()
    markers = list(re.finditer(r"^\s*Action\s*:", text, re.M))
    if markers:
        text = text[markers[-1].end():].strip()
    m = _CALL.match(text.splitlines()[0].strip() if text else "")
    if not m:
        raise MalformedArguments("expected name(key='value', ...)", raw)
    name = m.group(1).lower()
    if name not in _UITARS_NAMES:
        raise UnrecognizedAction(f"unrecognized action {m.group(1)!r}", raw)
    kind = _UITARS_NAMES[name]
    kwargs = {}
    for kw in _UITARS_KW.finditer(m.group(2)):
        value = kw.group(2) if kw.group(2) is not None else kw.group(3)
        kwargs[kw.group(1)] = _unescape(value)

    if kind in (ActionKind.CLICK, ActionKind.LONG_PRESS):
        box = kwargs.get("start_box") or kwargs.get("point")
        if box is None:
            raise MalformedArguments(f"{name} needs start_box", raw)
        nums = _numbers(box)
        if len(nums) == 4:
            nums = [(nums[0] + nums[2]) / 2, (nums[1] + nums[3]) / 2]
        if len(nums) != 2:
            raise MalformedArguments("start_box must hold a point or a box", raw)
        return Action(kind, point=_to_fraction(nums[0], nums[1], Adapter.UITARS, screen, raw))
    if kind is ActionKind.TYPE:
        if "content" not in kwargs:
            raise MalformedArguments("type needs content", raw)
        return Action.type_text(kwargs["content"])
    if kind is ActionKind.SCROLL:
        if "direction" not in kwargs:
            raise MalformedArguments("scroll needs direction", raw)
        return Action.scroll(_direction(kwargs["direction"], raw))
    return Action(kind)


def _render_uitars(a: Action, screen: ScreenshotRef) -> str:
    if a.point is not None:
        x, y = _from_fraction(a.point, Adapter.UITARS, screen)
        name = "click" if a.kind is ActionKind.CLICK else "long_press"
        return f"{name}(start_box='<|box_start|>({x},{y})<|box_end|>')"
    if a.kind is ActionKind.TYPE:
        escaped = a.text.replace("\\", "\\\\").replace("'", "\\'").replace("\n", "\\n").replace("\t", "\\t")
        return f"type(content='{escaped}')"
    if a.kind is ActionKind.SCROLL:
        return f"scroll(direction='{a.direction.value.lower()}')"
    return {
        ActionKind.PRESS_BACK: "press_back()",
        ActionKind.PRESS_HOME: "press_home()",
        ActionKind.WAIT: "wait()",
        ActionKind.COMPLETE: "finished()",
    }[a.kind]


# -- OS-Atlas ----------------------------------------------------------------------

def _parse_osatlas(raw: str, screen: ScreenshotRef) -> Action:
    text = raw.strip()
    m = list(re.finditer(r"^\s*actions?\s*:", text, re.I | re.M))
    if m:
        text = text[m[-1].end():]
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedArguments("no action found", raw)
    line = lines[0]
    head = re.match(r"^([A-Za-z_]+)", line)
    if not head:
        raise MalformedArguments("expected an action name", raw)
    try:
        kind = ActionKind.parse(head.group(1))
    except ValueError:
        raise UnrecognizedAction(f"unrecognized action {head.group(1)!r}", raw) from None
    rest = line[head.end():].strip()

    if kind in (ActionKind.CLICK, ActionKind.LONG_PRESS):
        pm = re.fullmatch(rf"<point>\s*\[\[\s*({_NUM})\s*,\s*({_NUM})\s*\]\]\s*</point>", rest)
        if not pm:
            raise MalformedArguments(f"{kind.value} expects <point>[[x, y]]</point>", raw)
        return Action(kind, point=_to_fraction(float(pm.group(1)), float(pm.group(2)), Adapter.OSATLAS, screen, raw))
    if kind is ActionKind.TYPE:
        tm = re.fullmatch(r"\[(.*)\]", rest, re.S)
        if not tm:
            raise MalformedArguments("TYPE expects [text]", raw)
        return Action.type_text(tm.group(1))
    if kind is ActionKind.SCROLL:
        sm = re.fullmatch(r"\[\s*(\w+)\s*\]", rest)
        if not sm:
            raise MalformedArguments("SCROLL expects [DIRECTION]", raw)
        return Action.scroll(_direction(sm.group(1), raw))
    if rest:
        raise MalformedArguments(f"{kind.value} takes no arguments", raw)
    return Action(kind)


def _render_osatlas(a: Action, screen: ScreenshotRef) -> str:
    if a.point is not None:
        x, y = _from_fraction(a.point, Adapter.OSATLAS, screen)
        return f"actions:\n{a.kind.value} <point>[[{x}, {y}]]</point>"
    if a.kind is ActionKind.TYPE:
        return f"actions:\nTYPE [{a.text}]"
    if a.kind is ActionKind.SCROLL:
        return f"actions:\nSCROLL [{a.direction.value}]"
    return f"actions:\n{a.kind.value}"


# -- Qwen2.5-VL mobile_use tool call ---------------------------------------------------

def _parse_qwenvl(raw: str, screen: ScreenshotRef) -> Action:
    m = re.search(r"<tool_call>(.*?)</tool_call>", raw, re.S)
    body = m.group(1) if m else raw
    start, end = body.find("{"), body.rfind("}")
    if start < 0 or end <= start:
        raise MalformedArguments("no tool call JSON found", raw)
    try:
        call = json.loads(body[start:end + 1])
        args = call["arguments"]
        if isinstance(args, str):
            args = json.loads(args)
        name = str(args["action"]).lower()
    except (ValueError, KeyError, TypeError):
        raise MalformedArguments("tool call JSON lacks arguments.action", raw) from None

    def point(key: str) -> tuple[float, float]:
        c = args.get(key)
        if not isinstance(c, list) or len(c) != 2 or not all(isinstance(v, (int, float)) for v in c):
            raise MalformedArguments(f"{name} needs {key}=[x, y]", raw)
        return _to_fraction(float(c[0]), float(c[1]), Adapter.QWENVL, screen, raw)

    if name in ("click", "left_click", "tap"):
        return Action(ActionKind.CLICK, point=point("coordinate"))
    if name == "long_press":
        return Action(ActionKind.LONG_PRESS, point=point("coordinate"))
    if name == "type":
        if not isinstance(args.get("text"), str):
            raise MalformedArguments("type needs text", raw)
        return Action.type_text(args["text"])
    if name in ("swipe", "scroll"):
        if "direction" in args:
            return Action.scroll(_direction(str(args["direction"]), raw))
        (x1, y1), (x2, y2) = point("coordinate"), point("coordinate2")
        dx, dy = x2 - x1, y2 - y1
        if dx == 0 and dy == 0:
            raise MalformedArguments("swipe of zero length", raw)
        # the finger moves opposite to the direction the content scrolls toward
        if abs(dy) >= abs(dx):
            return Action.scroll(Direction.DOWN if dy < 0 else Direction.UP)
        return Action.scroll(Direction.RIGHT if dx < 0 else Direction.LEFT)
    if name == "system_button":
        button = str(args.get("button", "")).lower()
        if button == "back":
            return Action(ActionKind.PRESS_BACK)
        if button == "home":
            return Action(ActionKind.PRESS_HOME)
        raise MalformedArguments(f"unsupported system button {button!r}", raw)
    if name == "wait":
        return Action(ActionKind.WAIT)
    if name == "terminate":
        return Action(ActionKind.COMPLETE)
    raise UnrecognizedAction(f"unrecognized action {name!r}", raw)


_SWIPES = {
    Direction.DOWN: ((0.5, 0.7), (0.5, 0.3)),
    Direction.UP: ((0.5, 0.3), (0.5, 0.7)),
    Direction.RIGHT: ((0.7, 0.5), (0.3, 0.5)),
    Direction.LEFT: ((0.3, 0.5), (0.7, 0.5)),
}


def _render_qwenvl(a: Action, screen: ScreenshotRef) -> str:
    if a.point is not None:
        args: dict = {"action": "click" if a.kind is ActionKind.CLICK else "long_press",
                      "coordinate": list(_from_fraction(a.point, Adapter.QWENVL, screen))}
    elif a.kind is ActionKind.TYPE:
        args = {"action": "type", "text": a.text}
    elif a.kind is ActionKind.SCROLL:
        p1, p2 = _SWIPES[a.direction]
        args = {"action": "swipe",
                "coordinate": list(_from_fraction(p1, Adapter.QWENVL, screen)),
                "coordinate2": list(_from_fraction(p2, Adapter.QWENVL, screen))}
    elif a.kind in (ActionKind.PRESS_BACK, ActionKind.PRESS_HOME):
        args = {"action": "system_button", "button": "Back" if a.kind is ActionKind.PRESS_BACK else "Home"}
    elif a.kind is ActionKind.WAIT:
        args = {"action": "wait"}
    else:
        args = {"action": "terminate", "status": "success"}
    call = {"name": "mobile_use", "arguments": args}
    return f"<tool_call>\n{json.dumps(call, ensure_ascii=False)}\n</tool_call>"


_PARSERS = {
    Adapter.CANONICAL: _parse_canonical,
    Adapter.UITARS: _parse_uitars,
    Adapter.OSATLAS: _parse_osatlas,
    Adapter.QWENVL: _parse_qwenvl,
}
_RENDERERS = {
    Adapter.CANONICAL: _render_canonical,
    Adapter.UITARS: _render_uitars,
    Adapter.OSATLAS: _render_osatlas,
    Adapter.QWENVL: _render_qwenvl,
}


def parse_action(adapter: Adapter | str, raw: str, screen: ScreenshotRef) -> Action:
    if not raw or not raw.strip():
        raise MalformedArguments("empty agent output", raw)
    return _PARSERS[Adapter(adapter)](raw, screen)


def render_action(adapter: Adapter | str, action: Action, screen: ScreenshotRef) -> str:
    """Inverse of :func:`parse_action` for actions whose points sit on the adapter's grid."""
    return _RENDERERS[Adapter(adapter)](action, screen)
