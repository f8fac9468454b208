"""Linear scan against a naive argsort oracle, plus the TopK collector."""

import numpy as np
import pytest

from chemsearch.bruteforce import (
    Neighbor,
    TopK,
    bf_knn,
    bf_knn_multi,
    euclidean_distance,
    squared_distances,
)
from chemsearch.fingerprint import ecfp
from chemsearch.molgraph import parse_smiles


def naive_knn(ids, pts, q, k):
    d = np.sqrt(squared_distances(pts, q))
    order = sorted(range(len(ids)), key=lambda i: (d[i], ids[i]))
    return [Neighbor(int(ids[i]), float(d[i])) for i in order[:k]]


def test_matches_naive_oracle():
    rng = np.random.default_rng(0)
    ids = rng.permutation(np.arange(1, 501)).astype(np.uint64)
    pts = rng.normal(size=(500, 7))
    for k in (1, 3, 17, 500, 900):
        q = rng.normal(size=7)
        assert bf_knn((ids, pts), q, k) == naive_knn(ids, pts, q, k)


def test_ties_break_by_ascending_id():
    pts = np.zeros((6, 3))
    pts[3:] = 1.0
    ids = np.array([42, 7, 99, 1, 2, 3], dtype=np.uint64)
    got = bf_knn((ids, pts), np.zeros(3), 4)
    assert [n.id for n in got] == [7, 42, 99, 1]
    assert got[0].distance == 0.0


def test_chunked_equals_whole():
    rng = np.random.default_rng(1)
    ids = np.arange(1, 1001, dtype=np.uint64)
    pts = rng.uniform(-1, 1, size=(1000, 5)).astype(np.float32)
    q = rng.uniform(-1, 1, size=5)
    whole = bf_knn((ids, pts), q, 25)
    chunked = bf_knn(
        ((ids[i : i + 77], pts[i : i + 77]) for i in range(0, 1000, 77)), q, 25
    )
    assert whole == chunked


def test_multi_query_equals_single():
    rng = np.random.default_rng(2)
    ids = np.arange(1, 301, dtype=np.uint64)
    pts = rng.normal(size=(300, 4)).astype(np.float32)
    queries = rng.normal(size=(9, 4))
    multi = bf_knn_multi((ids, pts), queries, 10)
    for q, got in zip(queries, multi):
        assert got == bf_knn((ids, pts), q, 10)


def test_k_larger_than_n_returns_all():
    ids = np.array([5, 6], dtype=np.uint64)
    pts = np.array([[0.0], [1.0]])
    got = bf_knn((ids, pts), np.array([0.2]), 10)
    assert [n.id for n in got] == [5, 6]


def test_validation_errors():
    ids = np.array([1], dtype=np.uint64)
    pts = np.ones((1, 3))
    with pytest.raises(ValueError):
        bf_knn((ids, pts), np.ones(3), 0)
    with pytest.raises(ValueError):
        bf_knn((ids, pts), np.ones(4), 1)
    with pytest.raises(ValueError):
        bf_knn((ids, pts), np.array([1.0, np.nan, 0.0]), 1)
    with pytest.raises(ValueError):
        bf_knn(iter([]), np.ones(3), 1)
    with pytest.raises(ValueError):
        bf_knn((ids, pts), np.ones(3), 1, metric="cosine")
    with pytest.raises(ValueError):
        euclidean_distance(np.ones(3), np.ones(4))


def test_euclidean_distance_value():
    assert euclidean_distance([0, 0], [3, 4]) == 5.0


# -- tanimoto metric


def test_tanimoto_scan():
    mols = ["CCO", "CCN", "c1ccccc1", "CC(=O)O", "CCCO"]
    fps = np.vstack([ecfp(parse_smiles(s)).data for s in mols])
    ids = np.arange(1, len(mols) + 1, dtype=np.uint64)
    q = ecfp(parse_smiles("CCO")).data
    got = bf_knn((ids, fps), q, 3, metric="tanimoto")
    assert got[0] == Neighbor(1, 0.0)  # the query itself
    assert all(0.0 <= n.distance <= 1.0 for n in got)
    assert [n.distance for n in got] == sorted(n.distance for n in got)


def test_tanimoto_all_zero_pair_rejected():
    ids = np.array([9], dtype=np.uint64)
    fps = np.zeros((1, 32), dtype=np.uint8)
    with pytest.raises(ValueError, match="9"):
        bf_knn((ids, fps), np.zeros(32, dtype=np.uint8), 1, metric="tanimoto")


# -- the shared collector


def test_topk_requires_positive_k():
    with pytest.raises(ValueError):
        TopK(0)


def test_topk_worst_key_semantics():
    top = TopK(2)
    assert top.worst_key() == np.inf
    top.update(np.array([3.0]), np.array([1], dtype=np.uint64))
    assert not top.full()
    assert top.worst_key() == np.inf
    top.update(np.array([1.0]), np.array([2], dtype=np.uint64))
    assert top.full()
    assert top.worst_key() == 3.0
    top.update(np.array([2.0]), np.array([3], dtype=np.uint64))
    assert top.result() == [(1.0, 2), (2.0, 3)]


def test_topk_id_tiebreak_on_equal_keys():
    top = TopK(2)
    top.update(np.array([1.0, 1.0, 1.0]), np.array([30, 10, 20], dtype=np.uint64))
    assert top.result() == [(1.0, 10), (1.0, 20)]
