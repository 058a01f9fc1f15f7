import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_top_k
from tiermem.vector_index import DimensionMismatch, IndexEntry, VectorIndex, cosine, embed


def unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def test_embed_basics():
    assert np.array_equal(embed("same text"), embed("same text"))
    assert not embed("").any()
    v = embed("some words here")
    assert abs(np.linalg.norm(v) - 1.0) < 1e-9


def test_embed_overlap_ordering():
    a = embed("blue triangle rule")
    assert cosine(a, embed("rule about blue triangles")) > cosine(a, embed("tax form deadline"))


def test_cosine_examples():
    d = 64
    u = np.zeros(d)
    u[:2] = [0.6, 0.8]
    v = np.zeros(d)
    v[:2] = [0.8, 0.6]
    assert cosine(u, v) == pytest.approx(0.96, abs=1e-12)
    assert cosine(u, u) == pytest.approx(1.0)
    e0, e1 = np.eye(d)[0], np.eye(d)[1]
    assert cosine(e0, e1) == 0.0
    assert cosine(u, np.zeros(d)) == 0.0
    with pytest.raises(DimensionMismatch):
        cosine(u, np.zeros(3))


def test_upsert_remove():
    idx = VectorIndex(8)
    assert idx.remove("nope") is False
    idx.upsert(IndexEntry("a", np.eye(8)[0]))
    assert idx.remove("a") is True
    assert idx.remove("a") is False
    assert idx.search_top_k(np.eye(8)[0], 3) == []
    with pytest.raises(DimensionMismatch):
        idx.upsert(IndexEntry("b", np.ones(4)))
    with pytest.raises(ValueError):
        idx.search_top_k(np.eye(8)[0], 0)


def test_upsert_replaces_vector_and_keeps_position():
    idx = VectorIndex(8)
    idx.upsert(IndexEntry("a", np.eye(8)[0]))
    idx.upsert(IndexEntry("b", np.eye(8)[1]))
    assert idx.search_top_k(np.eye(8)[0], 1)[0][0] == "a"
    idx.upsert(IndexEntry("a", np.eye(8)[1]))
    # a and b now tie; a was inserted first so it stays ahead
    assert [e for e, _ in idx.search_top_k(np.eye(8)[1], 2)] == ["a", "b"]
    assert idx.search_top_k(np.eye(8)[0], 2, min_sim=0.5) == []


def test_k_larger_than_matches():
    idx = VectorIndex(8)
    for i in range(3):
        idx.upsert(IndexEntry(f"e{i}", np.eye(8)[i]))
    assert len(idx.search_top_k(np.eye(8)[0], 10, min_sim=-1.0)) == 3


def test_ties_go_to_older_entry():
    idx = VectorIndex(4)
    v = np.array([1.0, 0, 0, 0])
    for eid in ["z", "y", "x"]:
        idx.upsert(IndexEntry(eid, v))
    assert [e for e, _ in idx.search_top_k(v, 3)] == ["z", "y", "x"]


def test_matches_brute_force_on_random_index():
    rng = np.random.default_rng(7)
    d = 32
    entries = [(f"e{i}", unit(rng, d)) for i in range(300)]
    idx = VectorIndex(d)
    for eid, v in entries:
        idx.upsert(IndexEntry(eid, v))
    for _ in range(30):
        q = unit(rng, d)
        got = idx.search_top_k(q, 10, min_sim=0.0)
        want = brute_force_top_k(entries, q, 10, 0.0)
        assert [e for e, _ in got] == [e for e, _ in want]
        assert np.allclose([s for _, s in got], [s for _, s in want], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.lists(st.integers(-2, 2), min_size=4, max_size=4), min_size=1, max_size=20),
    st.lists(st.integers(-2, 2), min_size=4, max_size=4),
    st.integers(1, 6),
)
def test_exactness_with_heavy_ties(vectors, query, k):
    # small integer vectors produce many exact ties and zero vectors
    entries = [(f"e{i}", np.array(v, dtype=float)) for i, v in enumerate(vectors)]
    idx = VectorIndex(4)
    for eid, v in entries:
        nv = np.linalg.norm(v)
        idx.upsert(IndexEntry(eid, v / nv if nv else v))
    q = np.array(query, dtype=float)
    got = idx.search_top_k(q, k, min_sim=-1.0)
    want = brute_force_top_k(entries, q, k, -1.0)
    assert [s for _, s in got] == pytest.approx([s for _, s in want], abs=1e-9)
    # ids must agree wherever similarities are not within rounding of a tie
    for (ge, gs), (we, ws) in zip(got, want):
        if ge != we:
            assert abs(gs - ws) < 1e-9
