from __future__ import annotations

import pytest

from ifragent.dataset import Dataset
from ifragent.model import Action, Direction, Language, Step, SupportTrajectory, Trajectory, UserProfile

from helpers import screen

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        ACCEPTANCE_RESULTS.append((name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))


@pytest.fixture
def small_dataset() -> Dataset:
    users = (UserProfile("alice", Language.EN), UserProfile("bo", Language.ZH))
    support = (
        SupportTrajectory("order a latte", (screen(0), screen(1)), "food", "alice"),
        SupportTrajectory("点一杯咖啡", (screen(0),), "food", "bo"),
    )
    test = (
        Trajectory(
            "order coffee",
            (
                Step(screen(0), Action.click(0.31, 0.62), (Action.click(0.31, 0.62), Action.click(0.5, 0.9))),
                Step(screen(1), Action.type_text("iced americano"), (Action.type_text("iced americano"),)),
            ),
            "food",
            "alice",
        ),
        Trajectory(
            "看新闻",
            (Step(screen(0), Action.scroll(Direction.DOWN), (Action.scroll(Direction.DOWN), Action.simple("WAIT"))),),
            "news",
            "bo",
        ),
    )
    return Dataset(users, support, test)
