"""Command-line entry point: ``ifragent {extract,run,eval,export-sft}``.

Exit codes: 0 success, 1 domain or backend failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

from .config import AppConfig, ConfigError, load_config, with_overrides
from .dataset import (
    Dataset,
    DatasetError,
    SftRecord,
    dumps_canonical,
    export_sft,
    load_dataset,
    step_key,
)
from .deployment import StageError, run_step
from .extraction import ExtractionError, run_extraction
from .llm import BackendUnavailable
from .metrics import aggregate, render_table
from .model import Action, HabitRepository, ScreenshotRef, UserProfile
from .prompts import format_steps
from .sop_library import SOPStore

log = logging.getLogger("ifragent")

PREDICTIONS = "predictions.jsonl"
TRACES = "traces.jsonl"
REPORT = "report.json"
SFT = "sft.jsonl"


class CommandError(Exception):
    """A domain failure; printed as ``<stage>: <message>`` and mapped to exit code 1."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")


def _habits_path(store_dir: Path, user_id: str) -> Path:
    return store_dir / "habits" / f"{user_id}.json"


def load_habits(store_dir: Path, user: UserProfile) -> UserProfile:
    path = _habits_path(store_dir, user.user_id)
    if path.exists():
        return replace(user, habits=HabitRepository.from_list(json.loads(path.read_text(encoding="utf-8"))))
    return user


def save_habits(store_dir: Path, user: UserProfile) -> None:
    path = _habits_path(store_dir, user.user_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_canonical(user.habits.to_list()) + "\n", encoding="utf-8")


def _load_common(args: argparse.Namespace) -> tuple[AppConfig, Dataset]:
    try:
        cfg = load_config(args.config, verbose=getattr(args, "verbose", False))
        cfg = with_overrides(cfg, tau=getattr(args, "tau", None), k_shots=getattr(args, "k_shots", None),
                             policy=getattr(args, "policy", None))
    except (ConfigError, ValueError, TypeError) as exc:
        raise CommandError("config", str(exc)) from None
    try:
        data = load_dataset(args.dataset)
    except (OSError, DatasetError) as exc:
        raise CommandError("dataset", str(exc)) from None
    return cfg, data


def _resolve_shot(shot: ScreenshotRef, base: Path) -> ScreenshotRef:
    """Relative screenshot paths are taken relative to the dataset file."""
    if Path(shot.path).is_absolute():
        return shot
    return replace(shot, path=str(base / shot.path))


def _open_store(cfg: AppConfig, store_dir: Path) -> SOPStore:
    try:
        return SOPStore(cfg.dim, cfg.tau, root=store_dir)
    except (OSError, ValueError) as exc:
        raise CommandError("store", str(exc)) from None


def cmd_extract(args: argparse.Namespace) -> int:
    cfg, data = _load_common(args)
    store_dir = Path(args.store)
    store = _open_store(cfg, store_dir)
    existing = sum(len(store.entries(u)) for u in store.users())
    if existing:
        print(f"warning: store already holds {existing} SOP entries; extraction appends, "
              "so re-running duplicates demonstrations", file=sys.stderr)

    base = Path(args.dataset).parent

    def one(user: UserProfile) -> tuple[UserProfile, int, int]:
        user = load_habits(store_dir, user)
        before_sop, before_habits = len(store.entries(user.user_id)), len(user.habits)
        try:
            support = [replace(t, screenshots=tuple(_resolve_shot(x, base) for x in t.screenshots))
                       for t in data.support_for(user.user_id)]
            _, updated = run_extraction(cfg.extraction, store, user, support)
        except ExtractionError as exc:
            save_habits(store_dir, exc.profile)
            raise CommandError(f"extract[{user.user_id}]", str(exc)) from None
        save_habits(store_dir, updated)
        return updated, len(store.entries(user.user_id)) - before_sop, len(updated.habits) - before_habits

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(one, data.users))
    for user, n_sop, n_habits in results:
        print(f"{user.user_id}: +{n_sop} SOP entries, +{n_habits} habits")
    return 0


def _key_dict(key: tuple[str, str, int]) -> dict[str, Any]:
    return {"user_id": key[0], "query": key[1], "step_index": key[2]}


def cmd_run(args: argparse.Namespace) -> int:
    cfg, data = _load_common(args)
    store_dir = Path(args.store)
    store = _open_store(cfg, store_dir)
    users = {u.user_id: load_habits(store_dir, u) for u in data.users}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    base = Path(args.dataset).parent
    jobs = [(t, s) for t in data.test for s in t.steps]
    abort = threading.Event()

    def one(item):
        t, s = item
        if abort.is_set():
            return None
        try:
            shot = _resolve_shot(s.screenshot, base)
            action, _, trace = run_step(cfg.deployment, store, users[t.user_id], t.query, shot)
            return action, trace, None
        except StageError as exc:
            if isinstance(exc.cause, BackendUnavailable):
                abort.set()
            return None, exc.trace, exc

    errored = 0
    systemic: Optional[StageError] = None
    with open(out / PREDICTIONS, "w", encoding="utf-8") as pred_fh, \
            open(out / TRACES, "w", encoding="utf-8") as trace_fh, \
            ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        for (t, s), result in zip(jobs, pool.map(one, jobs)):
            if result is None:
                continue
            action, trace, err = result
            key = _key_dict(step_key(t, s))
            if err is not None:
                errored += 1
                if isinstance(err.cause, BackendUnavailable) and systemic is None:
                    systemic = err
            pred = {**key, "action": action.to_dict() if action else None,
                    "error": trace.error}
            pred_fh.write(json.dumps(pred, sort_keys=True, ensure_ascii=False) + "\n")
            trace_line = {**key, **trace.to_dict(include_prompts=args.verbose)}
            trace_fh.write(json.dumps(trace_line, sort_keys=True, ensure_ascii=False) + "\n")
            pred_fh.flush()
            trace_fh.flush()

    if systemic is not None:
        raise CommandError(f"run[{systemic.stage}]", f"backend unreachable: {systemic.cause}")
    print(f"{len(jobs)} steps, {len(jobs) - errored} completed, {errored} errored")
    return 0


def _parse_key(obj: dict[str, Any]) -> tuple[str, str, int]:
    return (str(obj["user_id"]), str(obj["query"]), int(obj["step_index"]))


def cmd_eval(args: argparse.Namespace) -> int:
    cfg, data = _load_common(args)
    out = Path(args.out)
    pred_path = Path(args.predictions) if args.predictions else out / PREDICTIONS
    preds: dict[tuple[str, str, int], Optional[Action]] = {}
    try:
        lines = pred_path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CommandError("eval", f"cannot read predictions: {exc}") from None
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            key = _parse_key(obj)
            preds[key] = Action.from_dict(obj["action"]) if obj.get("action") else None
        except (KeyError, TypeError, ValueError) as exc:
            raise CommandError("eval", f"{pred_path}:{n}: bad prediction ({exc})") from None

    pairs, scenarios, expected = [], [], set()
    missing = []
    for t in data.test:
        for s in t.steps:
            key = step_key(t, s)
            expected.add(key)
            if key not in preds:
                missing.append(key)
                continue
            pairs.append((preds[key], s))
            scenarios.append(t.scenario)
    unknown = [k for k in preds if k not in expected]
    if missing or unknown:
        parts = []
        if missing:
            parts.append("missing predictions for " + ", ".join("/".join(map(str, k)) for k in missing))
        if unknown:
            parts.append("predictions for unknown steps " + ", ".join("/".join(map(str, k)) for k in unknown))
        raise CommandError("eval", f"{len(preds)} predictions vs {len(expected)} steps; " + "; ".join(parts))
    if not pairs:
        raise CommandError("eval", "dataset has no test steps")

    report = aggregate(pairs, cfg.policy, scenarios)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT).write_text(dumps_canonical(report.to_dict()) + "\n", encoding="utf-8")
    print(render_table(report))
    return 0


def _records_from_traces(path: Path) -> list[SftRecord]:
    records: list[SftRecord] = []
    seen = set()
    skipped = 0
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        tr = json.loads(line)
        if tr.get("error") or not tr.get("habits") or not tr.get("rewritten_sop"):
            skipped += 1
            continue
        rec = SftRecord(
            query=tr["query"],
            sop=format_steps(tr["sop"]),
            habits=tr["habits"],
            rewritten_query=tr["rewritten_query"],
            rewritten_sop=format_steps(tr["rewritten_sop"]),
        )
        if rec not in seen:
            seen.add(rec)
            records.append(rec)
    if skipped:
        print(f"skipped {skipped} trace(s) with errors or no habits", file=sys.stderr)
    return records


def cmd_export_sft(args: argparse.Namespace) -> int:
    try:
        if args.traces:
            records = _records_from_traces(Path(args.traces))
        else:
            doc = json.loads(Path(args.dataset).read_text(encoding="utf-8"))
            raw = doc.get("sft", []) if isinstance(doc, dict) else []
            records = []
            for i, r in enumerate(raw):
                try:
                    records.append(SftRecord.from_dict(r))
                except (ValueError, TypeError) as exc:
                    raise CommandError("export-sft", f"sft[{i}]: {exc}") from None
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        export_sft(records, out / SFT)
    except (OSError, ValueError, KeyError) as exc:
        raise CommandError("export-sft", str(exc)) from None
    print(f"wrote {len(records)} SFT records to {out / SFT}")
    return 0


def _policy_item(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    key, value = text.split("=", 1)
    key = key.strip()
    if key in ("click_rel_err", "text_sim_min"):
        try:
            return key, float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{key} needs a number") from None
    if key in ("intent_match", "text_metric"):
        return key, value.strip()
    raise argparse.ArgumentTypeError(f"unknown policy key {key!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ifragent", description="Personalized SOP extraction, deployment and step-wise evaluation for mobile GUI agents.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, store: bool = True, out: bool = True) -> None:
        p.add_argument("--config", help="JSON config file (defaults: mock chat, hash embeddings)")
        p.add_argument("--dataset", required=True, help="dataset JSON file")
        if store:
            p.add_argument("--store", required=True, help="SOP store directory")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--verbose", action="store_true", help="log backend traffic; keep prompts in traces")

    p = sub.add_parser("extract", help="build SOP libraries and habit repositories from support data")
    common(p, out=False)
    p.add_argument("--tau", type=float, help="retrieval threshold; a stored query must score strictly above it")
    p.add_argument("--jobs", type=int, default=1, help="users extracted in parallel")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("run", help="run the deployment pipeline on every test step")
    common(p)
    p.add_argument("--tau", type=float, help="retrieval threshold; a stored query must score strictly above it")
    p.add_argument("--k-shots", type=int, dest="k_shots", help="demonstrations given to the SOP extractor (0 = zero-shot)")
    p.add_argument("--jobs", type=int, default=1, help="steps processed in parallel")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score predictions against the test annotations")
    common(p, store=False)
    p.add_argument("--predictions", help=f"predictions file (default: <out>/{PREDICTIONS})")
    p.add_argument("--policy", type=_policy_item, action="append", default=[],
                   help="match-policy override KEY=VALUE (click_rel_err, text_sim_min, intent_match)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-sft", help="write query-rewriter warm-up records as JSON lines")
    p.add_argument("--dataset", help="dataset JSON file with an 'sft' section")
    p.add_argument("--traces", help="traces.jsonl produced by 'run'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_export_sft)
    return parser


def _check_paths(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if args.command == "export-sft" and not (args.dataset or args.traces):
        parser.error("export-sft needs --dataset or --traces")
    for name in ("config", "dataset", "traces", "predictions"):
        value = getattr(args, name, None)
        if value and not Path(value).exists():
            parser.error(f"--{name}: no such file: {value}")
    if args.command in ("run",) and not Path(args.store).is_dir():
        parser.error(f"--store: no such directory: {args.store}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _check_paths(parser, args)
    if getattr(args, "policy", None):
        args.policy = dict(args.policy)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
