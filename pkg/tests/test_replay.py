import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import random_corpus

from polenav.errors import FormatError, MagicMismatchError, NotFoundError, TruncatedFileError, UnsupportedVersionError
from polenav.replay import (
    HEADER,
    SENTINEL,
    LookupTable,
    build_table,
    dequantize_sim,
    lookup,
    quantize_sim,
    table_size_bytes,
)
from polenav.sbow import build_index, query


def test_quantize_examples():
    assert quantize_sim(1.0, 8) == 255
    assert quantize_sim(0.0, 8) == 0
    assert quantize_sim(0.5, 8) == 128
    with pytest.raises(ValueError):
        quantize_sim(1.01, 8)
    with pytest.raises(ValueError):
        quantize_sim(0.5, 17)


@pytest.mark.parametrize("B", range(1, 17))
def test_quantization_error_bound(B):
    s = np.linspace(0.0, 1.0, 20001)
    err = np.array([abs(dequantize_sim(quantize_sim(v, B), B) - v) for v in s])
    assert err.max() <= 1 / (2 * ((1 << B) - 1)) + 1e-15


@pytest.fixture(scope="module")
def corpus():
    rng = np.random.default_rng(7)
    docs = random_corpus(rng, 30, 20, vocab=25)
    queries = [(i, terms) for i, (_, terms) in enumerate(random_corpus(rng, 12, 15, vocab=25))]
    queries.append((12, []))
    queries.append((13, docs[4][1]))
    return build_index(docs), queries


def test_self_query_quantizes_to_max(corpus):
    idx, queries = corpus
    t = build_table(idx, queries, 5, 8)
    assert (t.place[13, 0], t.qsim[13, 0]) == (4, 255)


def test_padding_when_corpus_smaller_than_K(corpus):
    idx, queries = corpus
    t = build_table(idx, queries, 50, 8)
    for qid, terms in queries:
        n = len(query(idx, terms, 50).ranked)
        assert np.count_nonzero(t.place[qid] == SENTINEL) == 50 - n
        assert np.all(t.qsim[qid][t.place[qid] == SENTINEL] == 0)
    assert lookup(t, 12) == []


@pytest.mark.parametrize("B", [4, 8, 16])
def test_lookup_close_to_live(corpus, B):
    idx, queries = corpus
    t = build_table(idx, queries, 10, B)
    for qid, terms in queries:
        live = query(idx, terms, 10).ranked
        got = lookup(t, qid)
        assert [p for p, _ in got] == [p for p, _ in live]
        for (_, a), (_, b) in zip(got, live):
            assert abs(a - b) <= 1 / (2 * ((1 << B) - 1)) + 1e-15


def test_rows_sorted_sentinels_last(corpus):
    idx, queries = corpus
    t = build_table(idx, queries, 40, 8)
    for row_p, row_q in zip(t.place, t.qsim):
        real = row_p != SENTINEL
        n = int(real.sum())
        assert np.all(real[:n]) and not np.any(real[n:])
        assert np.all(np.diff(row_q[:n].astype(int)) <= 0)


def test_lookup_unknown_id_and_purity(corpus):
    idx, queries = corpus
    t = build_table(idx, queries, 5, 8)
    with pytest.raises(NotFoundError):
        lookup(t, 99)
    assert lookup(t, 3) == lookup(t, 3)


def test_build_table_requires_dense_ids(corpus):
    idx, queries = corpus
    with pytest.raises(ValueError):
        build_table(idx, [(1, [])], 5, 8)


@pytest.mark.parametrize("B", [1, 8, 9, 16])
def test_size_formula(corpus, B):
    idx, queries = corpus
    t = build_table(idx, queries, 7, B)
    assert len(t.to_bytes()) == table_size_bytes(len(queries), 7, B)
    assert HEADER.size == 19


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 16), st.integers(1, 6), st.integers(0, 5), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_random_table_round_trip(B, K, n_q, n_map, seed):
    rng = np.random.default_rng(seed)
    place = rng.integers(0, n_map, size=(n_q, K)).astype(np.uint32)
    place[rng.random((n_q, K)) < 0.2] = SENTINEL
    qsim = rng.integers(0, 1 << B, size=(n_q, K)).astype(np.uint16)
    t = LookupTable(K, B, place, qsim, n_map)
    blob = t.to_bytes()
    back = LookupTable.from_bytes(blob)
    assert back == t
    assert back.to_bytes() == blob


def test_file_round_trip(tmp_path, corpus):
    idx, queries = corpus
    t = build_table(idx, queries, 6, 8)
    p = tmp_path / "t.sblt"
    t.save(p)
    assert LookupTable.load(p) == t
    assert p.read_bytes() == t.to_bytes()


def test_corrupted_table_headers(corpus):
    idx, queries = corpus
    blob = build_table(idx, queries, 4, 8).to_bytes()
    with pytest.raises(MagicMismatchError):
        LookupTable.from_bytes(b"SBWI" + blob[4:])
    with pytest.raises(UnsupportedVersionError):
        LookupTable.from_bytes(blob[:4] + (2).to_bytes(2, "little") + blob[6:])
    for cut in (0, 2, 6, 12, 18, len(blob) - 1):
        with pytest.raises(TruncatedFileError):
            LookupTable.from_bytes(blob[:cut])
    with pytest.raises(FormatError):
        LookupTable.from_bytes(blob + b"\0")
    bad_b = bytearray(blob)
    bad_b[10] = 0  # B
    with pytest.raises(FormatError):
        LookupTable.from_bytes(bytes(bad_b))
