import math
import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifragent.llm import EmbeddingVector
from ifragent.sop_library import SOPEntry, SOPStore, cosine_similarity


def vec(*xs):
    return EmbeddingVector(tuple(float(x) for x in xs))


def entry(q, v, sop=("open app",)):
    return SOPEntry(q, v, tuple(sop))


def test_cosine_examples():
    assert cosine_similarity(vec(1, 0), vec(1, 0)) == 1.0
    assert cosine_similarity(vec(1, 0), vec(0, 1)) == 0.0
    # hand arithmetic: 32 / (sqrt(14) * sqrt(77)) = 0.974631846...
    assert cosine_similarity(vec(1, 2, 3), vec(4, 5, 6)) == pytest.approx(0.974632, abs=5e-7)


def test_cosine_errors():
    with pytest.raises(ValueError, match="dimension"):
        cosine_similarity(vec(1, 0), vec(1, 0, 0))
    with pytest.raises(ValueError, match="zero"):
        cosine_similarity(vec(0, 0), vec(1, 0))


nonzero = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: math.sqrt(sum(x * x for x in v)) > 1e-3
)


@given(nonzero, nonzero)
def test_cosine_symmetric_and_bounded(a, b):
    va, vb = vec(*a), vec(*b)
    s = cosine_similarity(va, vb)
    assert s == cosine_similarity(vb, va)
    assert -1.0 <= s <= 1.0
    assert cosine_similarity(va, va) == 1.0


def test_insert_and_order():
    store = SOPStore(dim=2)
    store.insert("u", entry("a", vec(1, 0)))
    assert len(store.entries("u")) == 1
    store.insert("u", entry("b", vec(0, 1)))
    assert [e.query_text for e in store.entries("u")] == ["a", "b"]
    with pytest.raises(ValueError, match="dim"):
        store.insert("u", entry("c", vec(1, 0, 0)))


def test_retrieve_empty_and_unknown_user():
    store = SOPStore(dim=2)
    assert store.retrieve("nobody", vec(1, 0)) is None


def test_threshold_is_strict():
    store = SOPStore(dim=2, tau=1.0)
    store.insert("u", entry("a", vec(1, 0)))
    assert store.retrieve("u", vec(1, 0)) is None
    store.tau = 0.0
    store2 = SOPStore(dim=2, tau=0.0)
    store2.insert("u", entry("a", vec(0, 1)))
    assert store2.retrieve("u", vec(1, 0)) is None  # cosine exactly 0, not > 0


def test_tie_goes_to_first_inserted():
    # query (1, 0); entries with sims 0.2, 0.9, 0.9
    def at(sim):
        return vec(sim, math.sqrt(1 - sim * sim))

    store = SOPStore(dim=2, tau=0.5)
    for q, s in [("a", 0.2), ("b", 0.9), ("c", 0.9)]:
        store.insert("u", entry(q, at(s)))
    hit = store.retrieve("u", vec(1, 0))
    assert hit.index == 1 and hit.query == "b"
    assert hit.score == pytest.approx(0.9)


def test_retrieval_is_per_user():
    store = SOPStore(dim=2, tau=0.5)
    store.insert("alice", entry("a", vec(1, 0)))
    assert store.retrieve("bob", vec(1, 0)) is None


def test_retrieve_top_k():
    store = SOPStore(dim=2, tau=0.0)
    store.insert("u", entry("low", vec(1, 1)))
    store.insert("u", entry("high", vec(1, 0)))
    store.insert("u", entry("neg", vec(-1, 0)))
    store.insert("u", entry("high2", vec(1, 0)))
    top = store.retrieve_top("u", vec(1, 0), 3)
    assert [r.query for r in top] == ["high", "high2", "low"]
    assert store.retrieve_top("u", vec(1, 0), 1)[0].index == store.retrieve("u", vec(1, 0)).index
    assert store.retrieve_top("u", vec(1, 0), 0) == []


def test_insertion_order_changes_only_tie_resolution():
    rng = random.Random(3)
    entries = [entry(f"q{i}", vec(*(rng.gauss(0, 1) for _ in range(8)))) for i in range(30)]
    q = vec(*(rng.gauss(0, 1) for _ in range(8)))
    scores = set()
    for _ in range(5):
        rng.shuffle(entries)
        store = SOPStore(dim=8, tau=-1.0)
        for e in entries:
            store.insert("u", e)
        scores.add(store.retrieve("u", q).score)
    assert len(scores) == 1


def test_file_backed_store_persists(tmp_path):
    store = SOPStore(dim=2, root=tmp_path)
    store.insert("alice", entry("order tea", vec(0.6, 0.8), ["open app", "pick tea"]))
    store.insert("alice", entry("book taxi", vec(1, 0)))
    assert (tmp_path / "alice.jsonl").read_text().count("\n") == 2
    reopened = SOPStore(dim=2, root=tmp_path)
    assert reopened.entries("alice") == store.entries("alice")
    with pytest.raises(ValueError, match="dim"):
        SOPStore(dim=3, root=tmp_path)


def test_concurrent_inserts_keep_every_entry(tmp_path):
    store = SOPStore(dim=2, root=tmp_path)

    def writer(k):
        for i in range(50):
            store.insert("u", entry(f"{k}-{i}", vec(1, i)))

    threads = [threading.Thread(target=writer, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(store.entries("u")) == 200
    assert len(SOPStore(dim=2, root=tmp_path).entries("u")) == 200


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(-3, 3), min_size=3, max_size=3), min_size=0, max_size=12),
       st.lists(st.integers(-3, 3), min_size=3, max_size=3),
       st.sampled_from([-0.5, 0.0, 0.5, 0.9]))
def test_none_iff_max_not_above_tau(rows, q, tau):
    rows = [r for r in rows if any(r)]
    if not any(q):
        q = [1, 0, 0]
    store = SOPStore(dim=3, tau=tau)
    for i, r in enumerate(rows):
        store.insert("u", entry(f"q{i}", vec(*r)))
    sims = [cosine_similarity(vec(*q), vec(*r)) for r in rows]
    hit = store.retrieve("u", vec(*q))
    assert (hit is None) == (not sims or max(sims) <= tau)
