"""Per-user vector library of (query embedding, SOP) pairs."""

from __future__ import annotations

import json
import threading
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .llm import EmbeddingVector

DEFAULT_TAU = 0.5


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    va = np.asarray(a.values, dtype=np.float64)
    vb = np.asarray(b.values, dtype=np.float64)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    if a.values == b.values:
        return 1.0
    sim = float(np.dot(va, vb)) / (na * nb)
    return min(1.0, max(-1.0, sim))


@dataclass(frozen=True)
class SOPEntry:
    query_text: str
    embedding: EmbeddingVector
    sop: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.sop:
            raise ValueError("SOP must have at least one step")

    def to_dict(self) -> dict:
        return {"query": self.query_text, "embedding": list(self.embedding.values), "sop": list(self.sop)}

    @classmethod
    def from_dict(cls, data: dict) -> "SOPEntry":
        return cls(
            str(data["query"]),
            EmbeddingVector(tuple(float(v) for v in data["embedding"])),
            tuple(str(s) for s in data["sop"]),
        )


@dataclass(frozen=True)
class Retrieval:
    query: str
    sop: tuple[str, ...]
    score: float
    index: int


class SOPStore:
    """Insertion-ordered SOP entries per user, optionally mirrored to ``<root>/<user_id>.jsonl``.

    Inserts for one user are serialized by a lock; retrievals read a snapshot of
    the entry list and need no locking.
    """

    def __init__(self, dim: int, tau: float = DEFAULT_TAU, root: str | Path | None = None):
        if dim <= 0:
            raise ValueError("store dim must be > 0")
        if not -1.0 <= tau <= 1.0:
            raise ValueError("tau must lie in [-1, 1]")
        self.dim = dim
        self.tau = tau
        self.root = Path(root) if root is not None else None
        self._entries: dict[str, list[SOPEntry]] = defaultdict(list)
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._guard = threading.Lock()
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.root.glob("*.jsonl")):
                self._load_user(path.stem, path)

    def _load_user(self, user: str, path: Path) -> None:
        for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entry = SOPEntry.from_dict(json.loads(line))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{n}: bad SOP entry ({exc})") from None
            if entry.embedding.dim != self.dim:
                raise ValueError(f"{path}:{n}: entry dim {entry.embedding.dim} != store dim {self.dim}")
            self._entries[user].append(entry)

    def _user_lock(self, user: str) -> threading.Lock:
        with self._guard:
            return self._locks[user]

    def users(self) -> list[str]:
        return sorted(u for u, e in self._entries.items() if e)

    def entries(self, user: str) -> list[SOPEntry]:
        return list(self._entries.get(user, ()))

    def insert(self, user: str, entry: SOPEntry) -> None:
        if entry.embedding.dim != self.dim:
            raise ValueError(f"entry dim {entry.embedding.dim} does not match store dim {self.dim}")
        with self._user_lock(user):
            if self.root is not None:
                line = json.dumps(entry.to_dict(), sort_keys=True, ensure_ascii=False)
                with open(self.root / f"{user}.jsonl", "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
            # rebind rather than mutate so concurrent readers keep a consistent list
            self._entries[user] = self._entries.get(user, []) + [entry]

    def scored(self, user: str, query: EmbeddingVector) -> list[tuple[int, float, SOPEntry]]:
        if query.dim != self.dim:
            raise ValueError(f"query dim {query.dim} does not match store dim {self.dim}")
        return [(i, cosine_similarity(query, e.embedding), e) for i, e in enumerate(self.entries(user))]

    def retrieve(self, user: str, query: EmbeddingVector) -> Optional[Retrieval]:
        """Most similar stored entry whose similarity strictly exceeds ``tau``.

        Scans in insertion order and only replaces the current best on a strictly
        greater score, so ties go to the earliest entry.
        """
        best: Optional[Retrieval] = None
        for i, score, entry in self.scored(user, query):
            if score > self.tau and (best is None or score > best.score):
                best = Retrieval(entry.query_text, entry.sop, score, i)
        return best

    def retrieve_top(self, user: str, query: EmbeddingVector, k: int) -> list[Retrieval]:
        """Up to ``k`` entries above ``tau``, best first; ties keep insertion order."""
        if k <= 0:
            return []
        hits = [(i, s, e) for i, s, e in self.scored(user, query) if s > self.tau]
        hits.sort(key=lambda h: (-h[1], h[0]))
        return [Retrieval(e.query_text, e.sop, s, i) for i, s, e in hits[:k]]
