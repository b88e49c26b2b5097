"""Precomputed top-K retrieval table with B-bit similarities.

Rows have a fixed stride of K records so any query's retrieval can be
replayed in O(K) without touching the index.  The stored value is the
similarity (higher is better), quantized with round-half-up.

File layout, little-endian::

    magic "SBLT" | version u16 = 1 | K u32 | B u8 | n_queries u32 | n_map u32
    n_queries rows x K records of (place_id u32, qsim ceil(B/8) bytes)

Missing candidates are padded with ``(0xFFFFFFFF, 0)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .binio import Reader
from .errors import FormatError, NotFoundError
from .sbow import query as sbow_query

TABLE_MAGIC = b"SBLT"
TABLE_VERSION = 1
SENTINEL = 0xFFFFFFFF
HEADER = struct.Struct("<4sHIBII")


def quantize_sim(s, B):
    if not 1 <= B <= 16:
        raise ValueError(f"bit width must lie in [1, 16], got {B}")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"similarity must lie in [0, 1], got {s}")
    return int(math.floor(s * ((1 << B) - 1) + 0.5))


def dequantize_sim(level, B):
    return level / ((1 << B) - 1)


def _record_dtype(B):
    qtype = "u1" if B <= 8 else "<u2"
    return np.dtype([("place", "<u4"), ("qsim", qtype)])


@dataclass(eq=False)
class LookupTable:
    K: int
    B: int
    place: np.ndarray  # (n_queries, K) uint32
    qsim: np.ndarray  # (n_queries, K)
    n_map: int

    @property
    def n_queries(self):
        return len(self.place)

    def lookup(self, query_id):
        return lookup(self, query_id)

    def __eq__(self, other):
        if not isinstance(other, LookupTable):
            return NotImplemented
        return (
            (self.K, self.B, self.n_map) == (other.K, other.B, other.n_map)
            and np.array_equal(self.place, other.place)
            and np.array_equal(self.qsim, other.qsim)
        )

    def to_bytes(self) -> bytes:
        head = HEADER.pack(TABLE_MAGIC, TABLE_VERSION, self.K, self.B, self.n_queries, self.n_map)
        rec = np.empty(self.place.shape, dtype=_record_dtype(self.B))
        rec["place"] = self.place
        rec["qsim"] = self.qsim
        return head + rec.tobytes()

    @classmethod
    def from_bytes(cls, data):
        r = Reader(data)
        r.header(TABLE_MAGIC, {TABLE_VERSION})
        K, B, n_queries, n_map = r.unpack("<IBII", "header")
        if not 1 <= B <= 16:
            raise FormatError(f"bit width {B} outside [1, 16]")
        if K < 1:
            raise FormatError("K must be >= 1")
        dt = _record_dtype(B)
        body = r.take(n_queries * K * dt.itemsize, "table rows")
        r.expect_end()
        rec = np.frombuffer(body, dtype=dt).reshape(n_queries, K)
        place = rec["place"].astype(np.uint32)
        qsim = rec["qsim"].astype(np.uint16)
        real = place != SENTINEL
        if np.any(place[real] >= n_map):
            raise FormatError("place_id out of range of the map")
        if np.any(qsim >= (1 << B)):
            raise FormatError(f"quantized similarity exceeds {B} bits")
        return cls(K, B, place, qsim, n_map)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def table_size_bytes(n_queries, K, B):
    return HEADER.size + n_queries * K * (4 + math.ceil(B / 8))


def build_table(index, queries, K, B) -> LookupTable:
    """Run every query once and keep its top-K, quantized.

    ``queries`` is a sequence of ``(query_id, terms)`` with ids 0..n-1.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    queries = sorted(queries, key=lambda t: t[0])
    ids = [q for q, _ in queries]
    if ids != list(range(len(ids))):
        raise ValueError("query ids must be exactly 0..n-1")
    n_map = index.n_images
    if list(index.documents) != list(range(n_map)):
        raise ValueError("map place ids must be exactly 0..n_map-1")
    place = np.full((len(queries), K), SENTINEL, dtype=np.uint32)
    qsim = np.zeros((len(queries), K), dtype=np.uint16)
    for row, (_, terms) in enumerate(queries):
        ranked = sbow_query(index, terms, K).ranked if terms else []
        for col, (pid, s) in enumerate(ranked):
            place[row, col] = pid
            qsim[row, col] = quantize_sim(s, B)
    return LookupTable(K, B, place, qsim, n_map)


def lookup(table: LookupTable, query_id):
    """Dequantized ``(place_id, similarity)`` pairs of one row, sentinels dropped."""
    if not 0 <= query_id < table.n_queries:
        raise NotFoundError(f"query id {query_id} not in table of {table.n_queries} rows")
    row_p = table.place[query_id]
    keep = row_p != SENTINEL
    scale = (1 << table.B) - 1
    return list(zip(row_p[keep].tolist(), (table.qsim[query_id][keep] / scale).tolist()))
