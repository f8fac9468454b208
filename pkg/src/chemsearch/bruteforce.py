"""Streaming linear-scan nearest neighbors: the correctness baseline.

``bf_knn`` makes one pass over the records with a bounded max-heap of the
current best k, so memory use is O(k) no matter how many records stream by.
Results are ordered by (distance, id) ascending; the same rule (on squared
distances, which orders identically) is packaged in ``TopK`` so that the
spatial index and this scan rank ties bit-for-bit the same way.

Euclidean distances are accumulated in float64 regardless of the storage
precision of the inputs.  Tanimoto distance over binary fingerprints is also
available here, and only here: the spatial index is Euclidean-only.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

__all__ = [
    "Neighbor",
    "TopK",
    "euclidean_distance",
    "squared_distances",
    "bf_knn",
    "bf_knn_multi",
]

EUCLIDEAN = "euclidean"
TANIMOTO = "tanimoto"

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


@dataclass(frozen=True)
class Neighbor:
    id: int
    distance: float


def euclidean_distance(a, b) -> float:
    """Euclidean distance between two vectors, accumulated in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sqrt((diff * diff).sum()))


def squared_distances(points, query) -> np.ndarray:
    """Squared Euclidean distances from each row of ``points`` to ``query``.

    The one distance kernel shared by the scan and the spatial index.
    Accumulation is column by column in index order: a row's result then
    depends only on its own values, never on how many rows happen to share
    the chunk.  (A sum(axis=1) reduction does not have that property; its
    rounding varies with the array height, which would break bit-identity
    between a full scan and a page-at-a-time index lookup.)
    """
    pts = np.asarray(points).astype(np.float64, copy=False)
    q = np.asarray(query).astype(np.float64, copy=False)
    out = np.zeros(len(pts))
    for j in range(pts.shape[1]):
        t = pts[:, j] - q[j]
        out += t * t
    return out


class TopK:
    """Bounded collector of the k smallest (key, id) pairs.

    Keys are compared first, ids break ties ascending.  ``result`` reports
    pairs in that order.
    """

    __slots__ = ("k", "_heap")

    def __init__(self, k: int):
        if k < 1:
            raise ValueError(f"k must be at least 1, got {k}")
        self.k = k
        self._heap: list[tuple[float, int]] = []  # (-key, -id) max-heap

    def worst_key(self) -> float:
        return -self._heap[0][0] if len(self._heap) == self.k else np.inf

    def full(self) -> bool:
        return len(self._heap) == self.k

    def update(self, keys: np.ndarray, ids: np.ndarray) -> None:
        heap = self._heap
        k = self.k
        if len(heap) < k:
            take = min(k - len(heap), len(keys))
            for t in range(take):
                heapq.heappush(heap, (-float(keys[t]), -int(ids[t])))
            keys = keys[take:]
            ids = ids[take:]
            if not len(keys):
                return
        worst_key, worst_id = heap[0]
        candidates = np.nonzero(keys <= -worst_key)[0]
        for t in candidates:
            key = float(keys[t])
            ident = int(ids[t])
            if (-key, -ident) > (worst_key, worst_id):
                heapq.heapreplace(heap, (-key, -ident))
                worst_key, worst_id = heap[0]

    def result(self) -> list[tuple[float, int]]:
        return sorted((-key, -ident) for key, ident in self._heap)


def _as_chunk_iter(records) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    if isinstance(records, tuple) and len(records) == 2:
        yield records
        return
    yield from records


def bf_knn(
    records: Iterable[tuple[np.ndarray, np.ndarray]] | tuple[np.ndarray, np.ndarray],
    query,
    k: int,
    metric: str = EUCLIDEAN,
) -> list[Neighbor]:
    """Exact k nearest neighbors by linear scan.

    Parameters
    ----------
    records : (ids, data) pair or iterable of such chunks
        For ``euclidean``, data rows are coordinate vectors; for
        ``tanimoto``, rows are uint8 fingerprint bitsets.
    query : vector or uint8 bitset matching the record layout
    k : int
        At least 1; fewer than k records simply yield fewer neighbors.
    metric : "euclidean" or "tanimoto"

    Returns
    -------
    list of Neighbor, sorted by (distance, id) ascending.
    """
    top = TopK(k)
    query = np.asarray(query)
    seen = 0
    if metric == EUCLIDEAN:
        q = query.astype(np.float64, copy=False)
        if not np.isfinite(q).all():
            raise ValueError("query contains non-finite values")
        for ids, data in _as_chunk_iter(records):
            if data.shape[1] != q.shape[0]:
                raise ValueError(
                    f"record dimension {data.shape[1]} != query dimension {q.shape[0]}"
                )
            top.update(squared_distances(data, q), ids)
            seen += len(ids)
        if seen == 0:
            raise ValueError("no records to search")
        return [Neighbor(ident, float(np.sqrt(d2))) for d2, ident in top.result()]
    if metric == TANIMOTO:
        qbits = query.astype(np.uint8, copy=False)
        qpop = int(_POPCOUNT[qbits].sum())
        for ids, data in _as_chunk_iter(records):
            if data.shape[1] != len(qbits):
                raise ValueError(
                    f"fingerprint width {data.shape[1] * 8} != query width {len(qbits) * 8}"
                )
            inter = _POPCOUNT[data & qbits].sum(axis=1)
            pops = _POPCOUNT[data].sum(axis=1)
            union = pops + qpop - inter
            if (union == 0).any():
                bad = int(ids[int(np.nonzero(union == 0)[0][0])])
                raise ValueError(
                    f"tanimoto undefined: record {bad} and query are both all-zero"
                )
            top.update(1.0 - inter / union, ids)
            seen += len(ids)
        if seen == 0:
            raise ValueError("no records to search")
        return [Neighbor(ident, float(d)) for d, ident in top.result()]
    raise ValueError(f"unknown metric {metric!r}")


def bf_knn_multi(
    records: Iterable[tuple[np.ndarray, np.ndarray]] | tuple[np.ndarray, np.ndarray],
    queries,
    k: int,
) -> list[list[Neighbor]]:
    """Euclidean k-NN for many queries in a single pass over the records.

    Equivalent to ``[bf_knn(records, q, k) for q in queries]`` but reads the
    stream once.  Each query sees the same chunks in the same order as the
    single-query scan, so the results match it bit for bit.
    """
    qs = np.asarray(queries, dtype=np.float64)
    if qs.ndim != 2 or len(qs) == 0:
        raise ValueError("queries must be a non-empty 2-d array")
    if not np.isfinite(qs).all():
        raise ValueError("queries contain non-finite values")
    tops = [TopK(k) for _ in range(len(qs))]
    seen = 0
    for ids, data in _as_chunk_iter(records):
        if data.shape[1] != qs.shape[1]:
            raise ValueError(
                f"record dimension {data.shape[1]} != query dimension {qs.shape[1]}"
            )
        for top, q in zip(tops, qs):
            top.update(squared_distances(data, q), ids)
        seen += len(ids)
    if seen == 0:
        raise ValueError("no records to search")
    return [
        [Neighbor(ident, float(np.sqrt(d2))) for d2, ident in top.result()]
        for top in tops
    ]
