"""Spatial bag-of-words place retrieval over an inverted file.

Each visual word is augmented with the horizontal bin of its coordinate
relative to the strongest pole in view, ``x' = x - x_o``.  The vertical
coordinate passes through unchanged in that rule and is constant in a 1D
route, so it is left out of :class:`SpatialWord`.

Scores are TF-IDF cosines with smoothed IDF::

    idf(w) = ln((N + 1) / (df(w) + 1)) + 1

Dot products and squared norms are summed with :func:`math.fsum`, which is
correctly rounded and therefore independent of summation order.  This is
what lets the inverted-file path agree bit-for-bit with a linear scan.
"""

from __future__ import annotations

import heapq
import math
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .binio import Reader
from .errors import AnchorError, FormatError

DEFAULT_BIN_WIDTH = 16
INDEX_MAGIC = b"SBWI"
INDEX_VERSION = 1


class SpatialWord(NamedTuple):
    word_id: int
    x_bin: int


def anchor_pixel(obs):
    """Pixel of the strongest pole projection; ties go to the leftmost."""
    if len(obs.pole_x) == 0:
        raise AnchorError("observation has no pole projection to anchor on")
    lik = np.asarray(obs.pole_likelihood)
    px = np.asarray(obs.pole_x)
    best = lik == lik.max()
    return int(px[best].min())


def anchor(obs, q=None, bin_width=DEFAULT_BIN_WIDTH):
    """Spatial words of ``obs`` anchored on its strongest pole.

    ``q`` is accepted for symmetry with the detection gate; only the pole
    projections themselves decide the anchor.
    """
    x_o = anchor_pixel(obs)
    xs = np.asarray(obs.word_x, dtype=np.int64) - x_o
    bins = np.floor_divide(xs, bin_width)
    return [SpatialWord(int(w), int(b)) for w, b in zip(obs.word_ids, bins)]


def smoothed_idf(n_images, df):
    return math.log((n_images + 1) / (df + 1)) + 1.0


@dataclass(frozen=True)
class RetrievalResult:
    ranked: list
    candidates: int = 0
    postings_scanned: int = 0

    def __len__(self):
        return len(self.ranked)


@dataclass(eq=False)
class SBoWIndex:
    documents: dict
    postings: dict
    df: dict
    doc_sqnorm: dict
    vocab_size: int = 0
    bin_width: int = DEFAULT_BIN_WIDTH
    _idf: dict = field(default_factory=dict, repr=False)

    @property
    def n_images(self):
        return len(self.documents)

    @property
    def n_words(self):
        if not self.documents:
            return 0.0
        return sum(sum(c.values()) for c in self.documents.values()) / len(self.documents)

    def idf(self, word):
        v = self._idf.get(word)
        if v is None:
            return smoothed_idf(self.n_images, 0)
        return v

    def weights(self, terms):
        """TF-IDF weight of every distinct term in a multiset."""
        counts = terms if isinstance(terms, Counter) else Counter(terms)
        return {w: tf * self.idf(w) for w, tf in counts.items()}

    def query(self, terms, K):
        return query(self, terms, K)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(dump_index(self))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return load_index(fh.read())


def build_index(docs, vocab_size=0, bin_width=DEFAULT_BIN_WIDTH) -> SBoWIndex:
    """Inverted file over ``(place_id, spatial_words)`` pairs."""
    documents = {}
    for place_id, terms in docs:
        place_id = int(place_id)
        if place_id in documents:
            raise ValueError(f"duplicate place_id {place_id}")
        documents[place_id] = Counter(SpatialWord(int(w), int(b)) for w, b in terms)
    documents = dict(sorted(documents.items()))

    postings = defaultdict(list)
    for place_id, counts in documents.items():
        for w, tf in counts.items():
            postings[w].append((place_id, tf))
    postings = {w: postings[w] for w in sorted(postings)}
    df = {w: len(p) for w, p in postings.items()}
    n = len(documents)
    idf = {w: smoothed_idf(n, d) for w, d in df.items()}

    doc_sqnorm = {
        pid: math.fsum((tf * idf[w]) ** 2 for w, tf in counts.items()) for pid, counts in documents.items()
    }
    return SBoWIndex(documents, postings, df, doc_sqnorm, vocab_size, bin_width, idf)


def _cosine(dot, sq_a, sq_b):
    if sq_a == 0.0 or sq_b == 0.0:
        return 0.0
    # sqrt(x * x) == x exactly in IEEE arithmetic, so self-similarity is 1.0
    return min(1.0, dot / math.sqrt(sq_a * sq_b))


def query(index: SBoWIndex, terms, K) -> RetrievalResult:
    """Top-``K`` places by cosine similarity, touching only query postings."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not terms:
        return RetrievalResult([])
    qw = index.weights(terms)
    q_sq = math.fsum(v * v for v in qw.values())
    products = defaultdict(list)
    scanned = 0
    for w, wq in qw.items():
        plist = index.postings.get(w)
        if not plist:
            continue
        scanned += len(plist)
        idf = index.idf(w)
        for pid, tf in plist:
            products[pid].append(wq * (tf * idf))
    scored = ((pid, _cosine(math.fsum(p), q_sq, index.doc_sqnorm[pid])) for pid, p in products.items())
    ranked = heapq.nsmallest(K, scored, key=lambda t: (-t[1], t[0]))
    return RetrievalResult(ranked, candidates=len(products), postings_scanned=scanned)


def similarity(a, b, idf) -> float:
    """Cosine between the TF-IDF vectors of two term multisets.

    ``idf`` is a callable (e.g. ``index.idf``); two empty multisets score 0.
    """
    ca, cb = Counter(a), Counter(b)
    wa = {w: tf * idf(w) for w, tf in ca.items()}
    wb = {w: tf * idf(w) for w, tf in cb.items()}
    dot = math.fsum(wa[w] * wb[w] for w in wa.keys() & wb.keys())
    return _cosine(dot, math.fsum(v * v for v in wa.values()), math.fsum(v * v for v in wb.values()))


def dump_index(index: SBoWIndex) -> bytes:
    """Serialize the index (integers only; weights are re-derived on load).

    Layout, little-endian::

        magic "SBWI" | version u16 | vocab_size u32 | bin_width u32
        n_docs u32 | n_docs x place_id u32
        n_terms u32 | n_terms x (word_id u32, x_bin i32, n_postings u32,
                                 n_postings x (place_id u32, tf u32))
    """
    out = [INDEX_MAGIC, struct.pack("<HIII", INDEX_VERSION, index.vocab_size, index.bin_width, index.n_images)]
    out.append(np.asarray(list(index.documents), dtype="<u4").tobytes())
    out.append(struct.pack("<I", len(index.postings)))
    for w, plist in index.postings.items():
        out.append(struct.pack("<IiI", w.word_id, w.x_bin, len(plist)))
        out.append(np.asarray(plist, dtype="<u4").reshape(-1).tobytes())
    return b"".join(out)


def load_index(data: bytes) -> SBoWIndex:
    r = Reader(data)
    r.header(INDEX_MAGIC, {INDEX_VERSION})
    vocab_size, bin_width, n_docs = r.unpack("<III", "header")
    place_ids = np.frombuffer(r.take(4 * n_docs, "document table"), dtype="<u4").tolist()
    terms = {pid: [] for pid in place_ids}
    if len(terms) != n_docs:
        raise FormatError("duplicate place_id in document table")
    n_terms = r.u32("term count")
    for _ in range(n_terms):
        word_id, x_bin, n_post = r.unpack("<IiI", "term header")
        plist = np.frombuffer(r.take(8 * n_post, "postings"), dtype="<u4").reshape(-1, 2)
        for pid, tf in plist.tolist():
            if pid not in terms:
                raise FormatError(f"posting references unknown place_id {pid}")
            terms[pid].extend([SpatialWord(word_id, x_bin)] * tf)
    r.expect_end()
    return build_index(terms.items(), vocab_size, bin_width)
