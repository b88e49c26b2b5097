import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import exhaustive_scores, random_corpus

from polenav.errors import AnchorError, MagicMismatchError, TruncatedFileError, UnsupportedVersionError
from polenav.sbow import (
    SpatialWord,
    anchor,
    anchor_pixel,
    build_index,
    dump_index,
    load_index,
    query,
    similarity,
    smoothed_idf,
)
from polenav.world import Observation

W = SpatialWord


def obs(words, poles):
    return Observation(
        np.array([w for w, _ in words], dtype=np.int64), np.array([x for _, x in words], dtype=np.int64),
        np.array([p for p, _ in poles], dtype=np.int64), np.array([q for _, q in poles], dtype=float),
    )


def test_anchor_examples():
    o = obs([(7, 150), (8, 100), (9, 99)], [(100, 0.8)])
    assert anchor(o) == [W(7, 3), W(8, 0), W(9, -1)]
    assert anchor_pixel(obs([], [(200, 0.9), (60, 0.9), (10, 0.5)])) == 60
    with pytest.raises(AnchorError):
        anchor(obs([(1, 5)], []))


@settings(max_examples=500, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 999), st.integers(0, 319)), max_size=30),
    st.lists(st.tuples(st.integers(0, 319), st.floats(0, 1)), min_size=1, max_size=4),
    st.integers(-400, 400),
    st.integers(1, 64),
)
def test_anchor_shift_invariance(words, poles, shift, bin_width):
    a = anchor(obs(words, poles), bin_width=bin_width)
    moved = obs([(w, x + shift) for w, x in words], [(p + shift, q) for p, q in poles])
    assert anchor(moved, bin_width=bin_width) == a


def test_idf_smoothing():
    idx = build_index([(0, [W(1, 0), W(2, 0)])])
    assert idx.idf(W(1, 0)) == pytest.approx(1.0)
    res = query(idx, [W(1, 0), W(2, 0)], 5)
    assert res.ranked == [(0, 1.0)]
    idx = build_index([(i, [W(1, 0)]) for i in range(5)] + [(5, [W(2, 0)])])
    assert 0 < idx.idf(W(1, 0)) < idx.idf(W(2, 0))
    assert smoothed_idf(5, 5) == 1.0


def test_duplicate_place_rejected():
    with pytest.raises(ValueError):
        build_index([(0, []), (0, [])])


def test_query_examples():
    docs = [(0, [W(1, 0), W(2, 1)]), (1, [W(3, 0)]), (2, [W(1, 0), W(3, 0), W(3, 0)])]
    idx = build_index(docs)
    assert query(idx, docs[2][1], 3).ranked[0] == (2, 1.0)
    assert query(idx, [W(99, 0)], 3).ranked == []
    assert query(idx, [], 3).ranked == []
    with pytest.raises(ValueError):
        query(idx, [W(1, 0)], 0)


def test_similarity_hand_computed():
    idf = {W(1, 0): 1.0, W(2, 0): 2.0, W(3, 0): 0.5}.get
    a = [W(1, 0), W(2, 0)]
    b = [W(1, 0), W(2, 0), W(2, 0), W(3, 0)]
    # a = (1, 2, 0), b = (1, 4, 0.5)
    want = (1 + 8) / (math.sqrt(5) * math.sqrt(1 + 16 + 0.25))
    assert similarity(a, b, idf) == pytest.approx(want, rel=1e-15)
    assert similarity(a, b, idf) == similarity(b, a, idf)
    assert similarity(a, a, idf) == 1.0
    assert similarity(a, [W(3, 0)], idf) == 0.0
    assert similarity([], [], idf) == 0.0


def test_query_matches_exhaustive_scan():
    rng = np.random.default_rng(0)
    docs = random_corpus(rng, 50, 20)
    idx = build_index(docs)
    for _ in range(100):
        terms = random_corpus(rng, 1, 15)[0][1]
        assert query(idx, terms, 10).ranked == exhaustive_scores(idx, terms, 10)


def test_query_touches_only_query_postings():
    rng = np.random.default_rng(1)
    idx = build_index(random_corpus(rng, 100, 30))
    terms = random_corpus(rng, 1, 10)[0][1]
    res = query(idx, terms, 5)
    assert res.postings_scanned == sum(idx.df.get(w, 0) for w in set(terms))
    assert res.candidates <= res.postings_scanned


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scores_bounded_and_sorted(seed):
    rng = np.random.default_rng(seed)
    idx = build_index(random_corpus(rng, 30, 12, vocab=15))
    ranked = query(idx, random_corpus(rng, 1, 12, vocab=15)[0][1], 30).ranked
    sims = [s for _, s in ranked]
    assert all(0.0 <= s <= 1.0 for s in sims)
    assert sims == sorted(sims, reverse=True)


def test_index_round_trip_is_byte_identical():
    idx = build_index(random_corpus(np.random.default_rng(2), 40, 25), vocab_size=40, bin_width=16)
    blob = dump_index(idx)
    back = load_index(blob)
    assert dump_index(back) == blob
    assert back.documents == idx.documents and back.doc_sqnorm == idx.doc_sqnorm


def test_index_corrupted_headers():
    blob = dump_index(build_index([(0, [W(1, -2)]), (1, [W(2, 3)])], 10))
    with pytest.raises(MagicMismatchError):
        load_index(b"XXXX" + blob[4:])
    with pytest.raises(UnsupportedVersionError):
        load_index(blob[:4] + (9).to_bytes(2, "little") + blob[6:])
    for cut in (0, 3, 5, 10, len(blob) - 1):
        with pytest.raises(TruncatedFileError):
            load_index(blob[:cut])


def test_rebuild_is_deterministic():
    docs = random_corpus(np.random.default_rng(3), 20, 10)
    assert dump_index(build_index(docs)) == dump_index(build_index(list(reversed(docs))))
