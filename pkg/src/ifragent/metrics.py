"""Step-wise action matching and SR / Type / IAR aggregation."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional, Sequence

from .model import Action, ActionKind, Step, actions_equal

# Differences are rounded before comparison so that, e.g., 0.64 - 0.50 counts as
# exactly 0.14 rather than its binary approximation.
_DECIMALS = 9


class ReportInvariantError(AssertionError):
    pass


@dataclass(frozen=True)
class MatchPolicy:
    click_rel_err: float = 0.14
    text_sim_min: float = 0.80
    text_metric: str = "normalized_levenshtein"
    # "tolerance": IAR uses the same rules as SR; "exact": structural equality with the intent action
    intent_match: str = "tolerance"

    def __post_init__(self) -> None:
        if not 0 < self.click_rel_err < 1:
            raise ValueError("click_rel_err must lie in (0, 1)")
        if not 0 < self.text_sim_min < 1:
            raise ValueError("text_sim_min must lie in (0, 1)")
        if self.text_metric != "normalized_levenshtein":
            raise ValueError(f"unsupported text metric {self.text_metric!r}")
        if self.intent_match not in ("tolerance", "exact"):
            raise ValueError("intent_match must be 'tolerance' or 'exact'")


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def text_similarity(a: str, b: str) -> float:
    """1 - edit distance / longer length, after NFC normalization and trimming."""
    a = unicodedata.normalize("NFC", a).strip()
    b = unicodedata.normalize("NFC", b).strip()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def match_action(pred: Action, gt: Action, policy: MatchPolicy = MatchPolicy()) -> bool:
    if pred.kind != gt.kind:
        return False
    if pred.kind in (ActionKind.CLICK, ActionKind.LONG_PRESS):
        dx = round(abs(pred.point[0] - gt.point[0]), _DECIMALS)
        dy = round(abs(pred.point[1] - gt.point[1]), _DECIMALS)
        return dx < policy.click_rel_err and dy < policy.click_rel_err
    if pred.kind is ActionKind.TYPE:
        return round(text_similarity(pred.text, gt.text), _DECIMALS) > policy.text_sim_min
    if pred.kind is ActionKind.SCROLL:
        return pred.direction == gt.direction
    return True


class StepOutcome(NamedTuple):
    matched_gt: bool
    matched_type: bool
    matched_intent: bool


def evaluate_step(pred: Optional[Action], step: Step, policy: MatchPolicy = MatchPolicy()) -> StepOutcome:
    """Score one prediction; ``None`` (no parseable action) misses everything."""
    if pred is None:
        return StepOutcome(False, False, False)
    matched_gt = any(match_action(pred, g, policy) for g in step.ground_truth)
    matched_type = any(pred.kind == g.kind for g in step.ground_truth)
    if policy.intent_match == "exact":
        matched_intent = actions_equal(pred, step.intent_aligned)
    else:
        matched_intent = match_action(pred, step.intent_aligned, policy)
    return StepOutcome(matched_gt, matched_type, matched_intent)


def check_ordering(sr: float, type_acc: float, iar: float) -> bool:
    """True when IAR <= SR <= Type."""
    return iar <= sr <= type_acc


@dataclass(frozen=True)
class Rates:
    n: int
    n_gt: int
    n_type: int
    n_intent: int

    @property
    def sr(self) -> float:
        return self.n_gt / self.n

    @property
    def type_acc(self) -> float:
        return self.n_type / self.n

    @property
    def iar(self) -> float:
        return self.n_intent / self.n

    @classmethod
    def count(cls, outcomes: Sequence[StepOutcome]) -> "Rates":
        return cls(
            n=len(outcomes),
            n_gt=sum(o.matched_gt for o in outcomes),
            n_type=sum(o.matched_type for o in outcomes),
            n_intent=sum(o.matched_intent for o in outcomes),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "n_gt": self.n_gt,
            "n_type": self.n_type,
            "n_intent": self.n_intent,
            "sr": self.sr,
            "type_acc": self.type_acc,
            "iar": self.iar,
        }


@dataclass(frozen=True)
class EvalReport:
    overall: Rates
    per_scenario: dict[str, Rates] = field(default_factory=dict)
    per_step: tuple[StepOutcome, ...] = ()

    @property
    def n(self) -> int:
        return self.overall.n

    @property
    def sr(self) -> float:
        return self.overall.sr

    @property
    def type_acc(self) -> float:
        return self.overall.type_acc

    @property
    def iar(self) -> float:
        return self.overall.iar

    def validate(self) -> None:
        for name, r in [("overall", self.overall), *sorted(self.per_scenario.items())]:
            if not (r.n_intent <= r.n_gt <= r.n_type <= r.n):
                raise ReportInvariantError(
                    f"{name}: expected IAR <= SR <= Type, got counts {r.n_intent}/{r.n_gt}/{r.n_type} of {r.n}"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.overall.to_dict(),
            "per_scenario": {k: v.to_dict() for k, v in sorted(self.per_scenario.items())},
            "per_step": [o._asdict() for o in self.per_step],
        }


def aggregate(
    steps: Sequence[tuple[Optional[Action], Step]],
    policy: MatchPolicy = MatchPolicy(),
    scenarios: Optional[Sequence[str]] = None,
) -> EvalReport:
    """SR, Type and IAR over (prediction, step) pairs, overall and per scenario tag."""
    if not steps:
        raise ValueError("cannot aggregate an empty set of steps")
    if scenarios is not None and len(scenarios) != len(steps):
        raise ValueError("scenarios must align with steps")
    outcomes = [evaluate_step(pred, step, policy) for pred, step in steps]
    per_scenario: dict[str, Rates] = {}
    if scenarios is not None:
        groups: dict[str, list[StepOutcome]] = {}
        for tag, o in zip(scenarios, outcomes):
            groups.setdefault(tag, []).append(o)
        per_scenario = {tag: Rates.count(group) for tag, group in groups.items()}
    report = EvalReport(Rates.count(outcomes), per_scenario, tuple(outcomes))
    report.validate()
    return report


def render_table(report: EvalReport) -> str:
    rows = [("ALL", report.overall)] + sorted(report.per_scenario.items())
    header = ("Scenario", "N", "SR(%)", "Type(%)", "IAR(%)")
    body = [
        (name, str(r.n), f"{100 * r.sr:.2f}", f"{100 * r.type_acc:.2f}", f"{100 * r.iar:.2f}")
        for name, r in rows
    ]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = []
    for row in [header, *body]:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
