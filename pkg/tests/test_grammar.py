import json
import random

import pytest

from ifragent.grammar import (
    Adapter,
    CoordinateOutOfRange,
    MalformedArguments,
    UnrecognizedAction,
    parse_action,
    render_action,
)
from ifragent.model import Action, ActionKind, Direction, ScreenshotRef

S = ScreenshotRef("s.png", 1000, 2000)


def test_canonical_click_pixels_to_fractions():
    a = parse_action("canonical", "CLICK(310, 620)", S)
    assert a.kind is ActionKind.CLICK and a.point == (0.31, 0.31)


@pytest.mark.parametrize("raw,expected", [
    ("WAIT()", Action(ActionKind.WAIT)),
    ("PRESS_BACK()", Action(ActionKind.PRESS_BACK)),
    ("COMPELTE()", Action(ActionKind.COMPLETE)),
    ('TYPE("large latte")', Action.type_text("large latte")),
    ("SCROLL(down)", Action.scroll(Direction.DOWN)),
    ("Thought: go on\nAction: LONG_PRESS(0, 2000)", Action(ActionKind.LONG_PRESS, point=(0.0, 1.0))),
])
def test_canonical_forms(raw, expected):
    assert parse_action(Adapter.CANONICAL, raw, S) == expected


@pytest.mark.parametrize("raw,err", [
    ("FLY(1, 2)", UnrecognizedAction),
    ("CLICK(1)", MalformedArguments),
    ("CLICK(1, 2, 3)", MalformedArguments),
    ("TYPE(hello)", MalformedArguments),
    ("WAIT(5)", MalformedArguments),
    ("SCROLL(SIDEWAYS)", MalformedArguments),
    ("", MalformedArguments),
    ("just some prose", MalformedArguments),
    ("CLICK(1001, 5)", CoordinateOutOfRange),
    ("CLICK(-1, 5)", CoordinateOutOfRange),
])
def test_canonical_errors(raw, err):
    with pytest.raises(err) as e:
        parse_action("canonical", raw, S)
    assert e.value.raw == raw


def test_uitars():
    raw = "Thought: tap it\nAction: click(start_box='<|box_start|>(310,620)<|box_end|>')"
    assert parse_action("uitars", raw, S).point == (0.31, 0.62)
    box = parse_action("uitars", "click(start_box='(100,200,300,400)')", S)
    assert box.point == (0.2, 0.3)
    assert parse_action("uitars", "type(content='it\\'s')", S).text == "it's"
    assert parse_action("uitars", "scroll(start_box='(1,1)', direction='up')", S).direction is Direction.UP
    assert parse_action("uitars", "finished()", S).kind is ActionKind.COMPLETE
    with pytest.raises(UnrecognizedAction):
        parse_action("uitars", "drag(start_box='(1,1)')", S)
    with pytest.raises(CoordinateOutOfRange):
        parse_action("uitars", "click(start_box='(1200,5)')", S)
    with pytest.raises(MalformedArguments):
        parse_action("uitars", "type()", S)


def test_uitars_action_marker_is_line_anchored():
    raw = "Thought: the Action: label is on screen\nAction: press_back()"
    assert parse_action("uitars", raw, S).kind is ActionKind.PRESS_BACK


def test_osatlas():
    assert parse_action("osatlas", "thoughts: x\nactions:\nCLICK <point>[[310, 620]]</point>", S).point == (0.31, 0.62)
    assert parse_action("osatlas", "TYPE [hot tea]", S).text == "hot tea"
    assert parse_action("osatlas", "SCROLL [LEFT]", S).direction is Direction.LEFT
    assert parse_action("osatlas", "PRESS_HOME", S).kind is ActionKind.PRESS_HOME
    with pytest.raises(MalformedArguments):
        parse_action("osatlas", "CLICK [[1, 2]]", S)
    with pytest.raises(UnrecognizedAction):
        parse_action("osatlas", "JUMP", S)


def _tool(args):
    return "<tool_call>\n" + json.dumps({"name": "mobile_use", "arguments": args}) + "\n</tool_call>"


def test_qwenvl():
    assert parse_action("qwenvl", _tool({"action": "click", "coordinate": [310, 620]}), S).point == (0.31, 0.31)
    assert parse_action("qwenvl", _tool({"action": "type", "text": "hi"}), S).text == "hi"
    assert parse_action("qwenvl", _tool({"action": "system_button", "button": "Back"}), S).kind is ActionKind.PRESS_BACK
    assert parse_action("qwenvl", _tool({"action": "terminate", "status": "success"}), S).kind is ActionKind.COMPLETE
    with pytest.raises(UnrecognizedAction):
        parse_action("qwenvl", _tool({"action": "open", "text": "app"}), S)
    with pytest.raises(MalformedArguments):
        parse_action("qwenvl", "<tool_call>not json</tool_call>", S)


def test_qwenvl_swipe_up_means_scroll_down():
    up = _tool({"action": "swipe", "coordinate": [500, 1500], "coordinate2": [500, 500]})
    assert parse_action("qwenvl", up, S).direction is Direction.DOWN
    left = _tool({"action": "swipe", "coordinate": [800, 1000], "coordinate2": [200, 1000]})
    assert parse_action("qwenvl", left, S).direction is Direction.RIGHT


def _grid_action(rng, adapter, screen):
    kind = rng.choice(list(ActionKind))
    if kind in (ActionKind.CLICK, ActionKind.LONG_PRESS):
        if adapter in (Adapter.UITARS, Adapter.OSATLAS):
            return Action(kind, point=(rng.randint(0, 1000) / 1000, rng.randint(0, 1000) / 1000))
        return Action(kind, point=(rng.randint(0, screen.width) / screen.width,
                                   rng.randint(0, screen.height) / screen.height))
    if kind is ActionKind.TYPE:
        alphabet = "abc xyz'\"\\咖啡" if adapter is not Adapter.OSATLAS else "abc xyz咖啡[]"
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 8))).strip() or "a"
        return Action.type_text(text)
    if kind is ActionKind.SCROLL:
        return Action.scroll(rng.choice(list(Direction)))
    return Action(kind)


@pytest.mark.parametrize("adapter", list(Adapter))
def test_render_parse_round_trip(adapter):
    rng = random.Random(adapter.value)
    for _ in range(500):
        screen = ScreenshotRef("s.png", rng.randint(1, 3000), rng.randint(1, 3000))
        a = _grid_action(rng, adapter, screen)
        assert parse_action(adapter, render_action(adapter, a, screen), screen) == a
