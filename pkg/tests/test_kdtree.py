"""Disk-backed kd-tree: parity with linear scan, build determinism, file checks."""

import hashlib
import os
import struct

import numpy as np
import pytest

from chemsearch.bruteforce import bf_knn
from chemsearch.kdtree import DEFAULT_LEAF_CAPACITY, KdTree, build


def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _make(tmp_path, pts, ids=None, name="t.kdt", **kw):
    pts = np.asarray(pts, dtype=np.float32)
    if ids is None:
        ids = np.arange(1, len(pts) + 1, dtype=np.uint64)
    path = str(tmp_path / name)
    build((ids, pts), path, **kw)
    return path, ids, pts


DISTRIBUTIONS = {
    "uniform": lambda rng, n, d: rng.uniform(-1, 1, size=(n, d)),
    "gaussian": lambda rng, n, d: rng.normal(size=(n, d)),
    "duplicates": lambda rng, n, d: rng.integers(0, 4, size=(n, d)).astype(float),
    "grid": lambda rng, n, d: np.indices((n,) + (1,) * (d - 1)).reshape(d, n).T % 7,
}


@pytest.mark.parametrize("dist", sorted(DISTRIBUTIONS))
@pytest.mark.parametrize("dim", [1, 2, 8, 16])
def test_knn_matches_linear_scan(tmp_path, dist, dim):
    rng = np.random.default_rng(hash((dist, dim)) % 2**32)
    n = 400
    pts = DISTRIBUTIONS[dist](rng, n, dim)
    path, ids, pts = _make(tmp_path, pts, leaf_capacity=16)
    with KdTree(path) as tree:
        for k in (1, 5, n, n + 10):
            for _ in range(5):
                q = rng.normal(size=dim)
                assert tree.knn(q, k) == bf_knn((ids, pts), q, k)


def test_out_of_core_build_is_byte_identical(tmp_path):
    rng = np.random.default_rng(7)
    # heavy duplication stresses the tie-splitting quota logic
    pts = rng.integers(0, 3, size=(20000, 4)).astype(np.float32)
    ids = np.arange(1, 20001, dtype=np.uint64)
    a = str(tmp_path / "mem.kdt")
    b = str(tmp_path / "ooc.kdt")
    build((ids, pts), a, leaf_capacity=64)
    # 64 KiB budget forces the streaming path at every level near the root
    build((ids, pts), b, leaf_capacity=64, memory_budget=64 * 1024)
    assert _sha(a) == _sha(b)


def test_build_accepts_chunk_generator(tmp_path):
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(3000, 6)).astype(np.float32)
    ids = np.arange(1, 3001, dtype=np.uint64)

    def gen():
        for i in range(0, 3000, 500):
            yield ids[i : i + 500], pts[i : i + 500]

    a = str(tmp_path / "whole.kdt")
    b = str(tmp_path / "gen.kdt")
    build((ids, pts), a)
    build(gen(), b)
    assert _sha(a) == _sha(b)


def test_rebuild_same_input_same_bytes(tmp_path):
    rng = np.random.default_rng(9)
    pts = rng.normal(size=(1500, 3)).astype(np.float32)
    a, ids, pts = _make(tmp_path, pts, name="a.kdt", leaf_capacity=32)
    b, _, _ = _make(tmp_path, pts, name="b.kdt", leaf_capacity=32)
    assert _sha(a) == _sha(b)


def test_reopen_gives_identical_answers(tmp_path):
    rng = np.random.default_rng(10)
    path, ids, pts = _make(tmp_path, rng.normal(size=(800, 5)))
    q = rng.normal(size=5)
    with KdTree(path) as t1:
        first = t1.knn(q, 20)
    with KdTree(path) as t2:
        assert t2.knn(q, 20) == first


def test_leaf_only_file(tmp_path):
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(50, 4))
    path, ids, pts = _make(tmp_path, pts, leaf_capacity=256)
    with KdTree(path) as tree:
        assert tree.stats()["internal_nodes"] == 0
        assert tree.stats()["leaf_pages"] == 1
        q = rng.normal(size=4)
        assert tree.knn(q, 5) == bf_knn((ids, pts), q, 5)


def test_leaf_capacity_one_and_single_point(tmp_path):
    path, ids, pts = _make(tmp_path, [[1.0, 2.0]], name="one.kdt", leaf_capacity=1)
    with KdTree(path) as tree:
        tree.check_integrity()
        got = tree.knn([0.0, 0.0], 3)
        assert [n.id for n in got] == [1]
        assert got[0].distance == pytest.approx(np.sqrt(5))

    rng = np.random.default_rng(12)
    pts = rng.normal(size=(100, 2))
    path, ids, pts = _make(tmp_path, pts, name="cap1.kdt", leaf_capacity=1)
    with KdTree(path) as tree:
        tree.check_integrity()
        q = rng.normal(size=2)
        assert tree.knn(q, 7) == bf_knn((ids, pts), q, 7)


def test_check_integrity_and_stats(tmp_path):
    rng = np.random.default_rng(13)
    path, ids, pts = _make(tmp_path, rng.normal(size=(2000, 3)), leaf_capacity=20)
    with KdTree(path) as tree:
        tree.check_integrity()
        st = tree.stats()
        assert st["count"] == 2000
        assert st["dim"] == 3
        assert st["leaf_capacity"] == 20
        assert st["internal_nodes"] >= 1
        assert st["leaf_pages"] >= 100  # ceil(2000/20)
        assert st["height"] >= 7
        assert st["file_bytes"] == os.path.getsize(path)


def test_iter_chunks_streams_every_record(tmp_path):
    rng = np.random.default_rng(14)
    pts = rng.normal(size=(700, 4)).astype(np.float32)
    path, ids, pts = _make(tmp_path, pts)
    seen_ids, seen_pts = [], []
    with KdTree(path) as tree:
        for cids, cpts in tree.iter_chunks(chunk_records=64):
            seen_ids.append(cids)
            seen_pts.append(cpts)
    seen_ids = np.concatenate(seen_ids)
    seen_pts = np.vstack(seen_pts)
    order = np.argsort(seen_ids)
    assert np.array_equal(seen_ids[order], ids)
    assert np.array_equal(seen_pts[order], pts)


def test_stats_dict_shows_pruning(tmp_path):
    rng = np.random.default_rng(15)
    n = 20000
    path, ids, pts = _make(tmp_path, rng.uniform(size=(n, 8)), leaf_capacity=64)
    with KdTree(path) as tree:
        stats = {}
        tree.knn(rng.uniform(size=8), 10, stats=stats)
    assert 0 < stats["distance_computations"] < n // 2
    assert stats["leaf_pages"] >= 1
    assert stats["internal_nodes"] >= 1


# -- range queries


def test_range_matches_linear_filter(tmp_path):
    rng = np.random.default_rng(16)
    pts = rng.uniform(-1, 1, size=(3000, 3)).astype(np.float32)
    path, ids, pts = _make(tmp_path, pts, leaf_capacity=25)
    with KdTree(path) as tree:
        for _ in range(10):
            lo = rng.uniform(-1, 0, size=3)
            hi = lo + rng.uniform(0, 1.5, size=3)
            inside = np.all((pts.astype(np.float64) >= lo) & (pts.astype(np.float64) <= hi), axis=1)
            expect = sorted(int(i) for i in ids[inside])
            assert tree.range_query(lo, hi) == expect


def test_range_boundary_points_included(tmp_path):
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [0.5, 0.5], [2.0, 2.0]])
    path, ids, pts = _make(tmp_path, pts, leaf_capacity=1)
    with KdTree(path) as tree:
        assert tree.range_query([0.0, 0.0], [1.0, 1.0]) == [1, 2, 3]
        assert tree.range_query([1.0, 1.0], [1.0, 1.0]) == [2]
        assert tree.range_query([3.0, 3.0], [4.0, 4.0]) == []


def test_range_rejects_inverted_bounds(tmp_path):
    path, *_ = _make(tmp_path, [[0.0, 0.0]])
    with KdTree(path) as tree:
        with pytest.raises(ValueError, match="dimension 1"):
            tree.range_query([0.0, 2.0], [1.0, 1.0])


# -- validation and corruption


def test_build_input_errors(tmp_path):
    out = str(tmp_path / "x.kdt")
    ids = np.array([1], dtype=np.uint64)
    with pytest.raises(ValueError):
        build(iter([]), out)
    with pytest.raises(ValueError):
        build((ids, np.array([[np.inf, 0.0]])), out)
    with pytest.raises(ValueError):
        build((ids, np.array([1.0, 2.0])), out)  # 1-d coords
    with pytest.raises(ValueError):
        build((ids, np.ones((1, 2))), out, leaf_capacity=0)
    with pytest.raises(ValueError):
        build((ids, np.ones((1, 2))), out, leaf_capacity=40000)
    with pytest.raises(ValueError):
        build((ids, np.ones((1, 2))), out, memory_budget=16)  # below one page

    def ragged():
        yield np.array([1], dtype=np.uint64), np.ones((1, 2))
        yield np.array([2], dtype=np.uint64), np.ones((1, 3))

    with pytest.raises(ValueError):
        build(ragged(), out)


def test_query_validation(tmp_path):
    path, *_ = _make(tmp_path, np.ones((10, 3)))
    with KdTree(path) as tree:
        with pytest.raises(ValueError):
            tree.knn(np.ones(2), 1)
        with pytest.raises(ValueError):
            tree.knn(np.ones(3), 0)
        with pytest.raises(ValueError):
            tree.knn(np.array([np.nan, 0, 0]), 1)


def test_open_rejects_bad_magic(tmp_path):
    p = tmp_path / "junk.kdt"
    p.write_bytes(b"NOPE" + b"\x00" * 60)
    with pytest.raises(ValueError, match="magic"):
        KdTree(str(p))


def test_open_rejects_truncation(tmp_path):
    path, *_ = _make(tmp_path, np.random.default_rng(0).normal(size=(500, 2)), name="t2.kdt", leaf_capacity=8)
    blob = open(path, "rb").read()
    crop = tmp_path / "crop.kdt"
    crop.write_bytes(blob[: len(blob) - 40])
    with pytest.raises(ValueError):
        KdTree(str(crop))


def test_open_rejects_corrupt_node(tmp_path):
    path, *_ = _make(tmp_path, np.random.default_rng(1).normal(size=(500, 2)), name="t3.kdt", leaf_capacity=8)
    blob = bytearray(open(path, "rb").read())
    hdr = struct.calcsize("<4sHHQIQQ")
    # point the root's left child at itself: traversal must not accept it
    blob[hdr + 8 : hdr + 16] = struct.pack("<Q", 0)
    bad = tmp_path / "bad.kdt"
    bad.write_bytes(bytes(blob))
    with pytest.raises(ValueError):
        KdTree(str(bad))


def test_default_leaf_capacity_export():
    assert 1 <= DEFAULT_LEAF_CAPACITY <= 32767
