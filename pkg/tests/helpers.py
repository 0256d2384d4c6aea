"""Random generators and small fixture builders shared by the test modules."""

from __future__ import annotations

import random
import string

from ifragent.dataset import Dataset
from ifragent.model import (
    Action,
    ActionKind,
    Direction,
    Habit,
    HabitRepository,
    Language,
    ScreenshotRef,
    Step,
    SupportTrajectory,
    Trajectory,
    UserProfile,
)

KINDS = list(ActionKind)
DIRECTIONS = list(Direction)
WORDS = ["coffee", "tea", "latte", "order", "pizza", "taxi", "home", "search", "咖啡", "外卖", "large", "iced"]


def screen(i: int = 0, w: int = 1080, h: int = 2400) -> ScreenshotRef:
    return ScreenshotRef(f"shots/s{i}.png", w, h, i)


def grid(rng: random.Random) -> float:
    """A coordinate on the 1/100 grid, so tolerance boundaries are hit exactly."""
    return rng.randint(0, 100) / 100


def random_text(rng: random.Random, n: int | None = None) -> str:
    n = rng.randint(0, 6) if n is None else n
    alphabet = "abcde" + "咖啡"
    return "".join(rng.choice(alphabet) for _ in range(n))


def random_action(rng: random.Random, kind: ActionKind | None = None) -> Action:
    kind = kind or rng.choice(KINDS)
    if kind in (ActionKind.CLICK, ActionKind.LONG_PRESS):
        return Action(kind, point=(grid(rng), grid(rng)))
    if kind is ActionKind.TYPE:
        return Action.type_text(random_text(rng))
    if kind is ActionKind.SCROLL:
        return Action.scroll(rng.choice(DIRECTIONS))
    return Action(kind)


def perturb(rng: random.Random, a: Action) -> Action:
    """A nearby action of the same kind: coordinates shifted by up to 0.2, text lightly edited."""
    if a.point is not None:
        x = min(1.0, max(0.0, round(a.point[0] + rng.randint(-20, 20) / 100, 2)))
        y = min(1.0, max(0.0, round(a.point[1] + rng.randint(-20, 20) / 100, 2)))
        return Action(a.kind, point=(x, y))
    if a.kind is ActionKind.TYPE:
        chars = list(a.text)
        for _ in range(rng.randint(0, 2)):
            if chars and rng.random() < 0.5:
                chars[rng.randrange(len(chars))] = rng.choice("abcxyz")
            else:
                chars.insert(rng.randint(0, len(chars)), rng.choice("abcxyz"))
        return Action.type_text("".join(chars))
    if a.kind is ActionKind.SCROLL:
        return Action.scroll(rng.choice(DIRECTIONS))
    return a


def random_step(rng: random.Random, index: int = 0) -> Step:
    gt = [random_action(rng) for _ in range(rng.randint(1, 4))]
    intent = rng.choice(gt)
    return Step(screen(index), intent, tuple(gt))


def random_prediction(rng: random.Random, step: Step) -> Action:
    r = rng.random()
    if r < 0.35:
        return perturb(rng, step.intent_aligned)
    if r < 0.6:
        return perturb(rng, rng.choice(step.ground_truth))
    if r < 0.7:
        return step.intent_aligned
    return random_action(rng)


def random_dataset(rng: random.Random) -> Dataset:
    users = []
    support: list[SupportTrajectory] = []
    test: list[Trajectory] = []
    for u in range(rng.randint(1, 3)):
        uid = f"user{u}"
        habits = HabitRepository(tuple(
            Habit(" ".join(rng.sample(WORDS, 2)), f"q{k}") for k in range(rng.randint(0, 2))
        ))
        users.append(UserProfile(uid, rng.choice(list(Language)), habits))
        queries = rng.sample(range(1000), rng.randint(1, 5))
        for n, qi in enumerate(queries):
            q = f"{' '.join(rng.sample(WORDS, 3))} #{qi}"
            scenario = rng.choice(["food", "travel", "shopping"])
            if n % 2 == 0:
                shots = tuple(screen(i, rng.randint(100, 2000), rng.randint(100, 3000)) for i in range(rng.randint(1, 3)))
                support.append(SupportTrajectory(q, shots, scenario, uid))
            else:
                steps = tuple(random_step(rng, i) for i in range(rng.randint(1, 3)))
                test.append(Trajectory(q, steps, scenario, uid))
    return Dataset(tuple(users), tuple(support), tuple(test))


def random_string(rng: random.Random, n: int = 8) -> str:
    return "".join(rng.choice(string.ascii_letters) for _ in range(n))


# -- two-user CLI fixture ----------------------------------------------------------
# alice's test query resolves to one of her stored demonstrations; bo's does not
# clear the threshold, so his step runs zero-shot.

FIXTURE_SOPS = {
    "order a coffee latte": ["Open the coffee app", "Choose latte", "Pay"],
    "book a taxi to the office": ["Open the taxi app", "Enter office address", "Confirm ride"],
    "play some music": ["Open the music app", "Tap play"],
    "read today news": ["Open the news app", "Scroll headlines"],
}
FIXTURE_HABITS = {
    "order a coffee latte": "- prefers oat milk",
    "book a taxi to the office": "- rides in economy class",
    "play some music": "- listens to jazz",
    "read today news": "",
}
FIXTURE_EXTRACTED = {
    "order a coffee": "1. Open the coffee app\n2. Choose coffee\n3. Pay",
    "listen to jazz music": "1. Open the music app\n2. Search music",
}
FIXTURE_REWRITES = {
    "order a coffee": "QUERY: order an oat-milk latte\n1. Open the coffee app\n2. Choose latte with oat milk\n3. Pay",
    "listen to jazz music": "QUERY: play a jazz playlist\n1. Open the music app\n2. Search jazz playlist",
}
FIXTURE_AGENT = {
    "order an oat-milk latte": "CLICK(540, 1200)",
    "play a jazz playlist": 'TYPE("jazz playlist")',
}


def _shot(path: str, i: int) -> dict:
    return {"path": path, "width": 1080, "height": 2400, "step_index": i}


def fixture_dataset_doc() -> dict:
    click = {"kind": "CLICK", "x": 0.5, "y": 0.5}
    typed = {"kind": "TYPE", "text": "jazz playlist"}
    return {
        "users": [
            {"user_id": "alice", "language": "EN", "habits": []},
            {"user_id": "bo", "language": "ZH", "habits": []},
        ],
        "support": [
            {"user_id": "alice", "scenario": "food", "query": "order a coffee latte",
             "screenshots": [_shot("a/s0.png", 0), _shot("a/s1.png", 1)]},
            {"user_id": "alice", "scenario": "travel", "query": "book a taxi to the office",
             "screenshots": [_shot("a/t0.png", 0)]},
            {"user_id": "bo", "scenario": "music", "query": "play some music",
             "screenshots": [_shot("b/m0.png", 0)]},
            {"user_id": "bo", "scenario": "news", "query": "read today news",
             "screenshots": [_shot("b/n0.png", 0), _shot("b/n1.png", 1)]},
        ],
        "test": [
            {"user_id": "alice", "scenario": "food", "query": "order a coffee", "steps": [
                {"screenshot": _shot("a/x0.png", 0), "intent_aligned": click, "ground_truth": [click]},
                {"screenshot": _shot("a/x1.png", 1), "intent_aligned": click,
                 "ground_truth": [click, {"kind": "WAIT"}]},
            ]},
            {"user_id": "bo", "scenario": "music", "query": "listen to jazz music", "steps": [
                {"screenshot": _shot("b/x0.png", 0), "intent_aligned": typed, "ground_truth": [typed]},
            ]},
        ],
    }


def _rules(table: dict) -> list[dict]:
    return [{"contains": k, "response": v} for k, v in table.items()]


def fixture_config_doc(agent: dict | None = None) -> dict:
    """Mock backends answering every call from fixed tables; any other prompt is a MockMiss."""
    return {
        "backends": {
            "explicit": {"rules": _rules({k: "\n".join(f"{i}. {s}" for i, s in enumerate(v, 1))
                                          for k, v in FIXTURE_SOPS.items()})},
            "implicit": {"rules": _rules(FIXTURE_HABITS)},
            "extractor": {"rules": _rules(FIXTURE_EXTRACTED)},
            "rewriter": {"rules": _rules(FIXTURE_REWRITES)},
            "agent": {"rules": _rules(agent or FIXTURE_AGENT)},
        },
        "embedding": {"kind": "hash", "dim": 64, "seed": 0},
        "tau": 0.5,
    }


def write_fixture(root, agent: dict | None = None) -> dict:
    import json
    from pathlib import Path

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    paths = {"dataset": root / "dataset.json", "config": root / "config.json",
             "store": root / "store", "out": root / "out"}
    paths["dataset"].write_text(json.dumps(fixture_dataset_doc(), ensure_ascii=False), encoding="utf-8")
    paths["config"].write_text(json.dumps(fixture_config_doc(agent)), encoding="utf-8")
    doc = fixture_dataset_doc()
    shots = [x for t in doc["support"] for x in t["screenshots"]] + [st["screenshot"] for t in doc["test"] for st in t["steps"]]
    for shot in shots:
        img = root / shot["path"]
        img.parent.mkdir(parents=True, exist_ok=True)
        img.write_bytes(b"\x89PNG\r\n\x1a\n")
    return {k: str(v) for k, v in paths.items()}
