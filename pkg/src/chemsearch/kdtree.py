"""Disk-backed k-d tree for exact Euclidean k nearest neighbor search.

The tree is built bottom-up by median partitioning (split dimension = widest
coordinate spread, split value = exact lower median, ties to the left) and
serialised so that only the internal nodes need to live in memory: leaf pages
are read on demand.  When a build's working set exceeds the configured memory
budget, partitioning runs out of core through scratch files, so databases far
larger than RAM can be indexed.

Queries use best-first traversal with exact box lower bounds.  A branch is
only skipped when its bound strictly exceeds the current k-th best distance,
so results (including equal-distance ties, broken by ascending id) match a
linear scan bit for bit; the distance kernel is shared with
:mod:`chemsearch.bruteforce` to that end.

File layout (all little-endian)::

    header:  "KDT1" | u16 version=1 | u16 dim | u64 count | u32 leaf_capacity
             | u64 internal_count | u64 leaf_section_offset
    nodes:   internal_count * (u16 split_dim | u16 pad=0 | f32 split_value
             | u64 left | u64 right)
    leaves:  concatenated pages of (u64 id | dim * f32 coords) records

A child reference with the high bit clear indexes the internal node array.
With the high bit set it names a leaf page: bits 48..62 carry the record
count (hence leaf_capacity <= 32767) and bits 0..47 the page's byte offset
within the leaf section.  Every coordinate is stored float32; distances are
accumulated in float64.
"""

from __future__ import annotations

import heapq
import itertools
import os
import shutil
import struct
import tempfile
from typing import Iterator

import numpy as np

from .bruteforce import Neighbor, TopK, squared_distances
from .formats import FormatError, atomic_write, iter_embedding_chunks

__all__ = ["KdTree", "build", "DEFAULT_LEAF_CAPACITY", "DEFAULT_MEMORY_BUDGET"]

MAGIC = b"KDT1"
VERSION = 1
_HEADER = struct.Struct("<4sHHQIQQ")
_NODE_DTYPE = np.dtype(
    [("sd", "<u2"), ("pad", "<u2"), ("sv", "<f4"), ("left", "<u8"), ("right", "<u8")]
)
_LEAF_BIT = 1 << 63
_COUNT_SHIFT = 48
_COUNT_MASK = (1 << 15) - 1
_OFFSET_MASK = (1 << 48) - 1

DEFAULT_LEAF_CAPACITY = 256
DEFAULT_MEMORY_BUDGET = 512 * 2**20
MAX_LEAF_CAPACITY = _COUNT_MASK

_STREAM_BYTES = 4 * 2**20  # chunk size for out-of-core passes
_COLLECT_LIMIT = 1 << 20  # values gathered in RAM to finish a median search


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("id", "<u8"), ("c", "<f4", (dim,))])


def _leaf_ref(count: int, offset: int) -> int:
    if offset > _OFFSET_MASK:
        raise ValueError("leaf section exceeds the 48-bit offset space")
    return _LEAF_BIT | (count << _COUNT_SHIFT) | offset


def _as_chunks(points) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    if isinstance(points, (str, os.PathLike)):
        yield from iter_embedding_chunks(points)
        return
    if isinstance(points, tuple) and len(points) == 2:
        yield points
        return
    yield from points


class _Builder:
    def __init__(self, dim: int, leaf_capacity: int, memory_budget: int, scratch: str):
        self.dim = dim
        self.leaf_capacity = leaf_capacity
        self.rec = _record_dtype(dim)
        page_bytes = leaf_capacity * self.rec.itemsize
        if memory_budget < page_bytes:
            raise ValueError(
                f"memory_budget {memory_budget} is smaller than one leaf page "
                f"({page_bytes} bytes)"
            )
        # Stable partitioning transiently holds a segment plus its two halves.
        self.mem_limit = max(memory_budget // 3, page_bytes)
        self.scratch = scratch
        self.nodes: list[tuple[int, float, int, int] | None] = []
        self.leaf_path = os.path.join(scratch, "leaves.bin")
        self.leaf_file = open(self.leaf_path, "wb")
        self.leaf_offset = 0
        self.seg_counter = itertools.count()
        self.chunk_records = max(1024, _STREAM_BYTES // self.rec.itemsize)

    # -- leaf and node emission

    def write_leaf(self, ids: np.ndarray, coords: np.ndarray) -> int:
        block = np.empty(len(ids), dtype=self.rec)
        block["id"] = ids
        block["c"] = coords
        payload = block.tobytes()
        ref = _leaf_ref(len(ids), self.leaf_offset)
        self.leaf_file.write(payload)
        self.leaf_offset += len(payload)
        return ref

    # -- in-memory build

    def build_mem(self, ids: np.ndarray, coords: np.ndarray) -> int:
        n = len(ids)
        if n <= self.leaf_capacity:
            return self.write_leaf(ids, coords)
        spread = coords.max(axis=0).astype(np.float64) - coords.min(axis=0)
        sd = int(np.argmax(spread))
        col = coords[:, sd]
        m_idx = (n - 1) // 2
        sv = np.partition(col, m_idx)[m_idx]
        lesseq = int((col <= sv).sum())
        if lesseq < n:
            mask = col <= sv
        else:
            less = int((col < sv).sum())
            quota = m_idx + 1 - less
            mask = col < sv
            mask[np.nonzero(col == sv)[0][:quota]] = True
        node_index = len(self.nodes)
        self.nodes.append(None)
        left_ids, left_coords = ids[mask], coords[mask]
        right_ids, right_coords = ids[~mask], coords[~mask]
        del ids, coords, col, mask
        left = self.build_mem(left_ids, left_coords)
        del left_ids, left_coords
        right = self.build_mem(right_ids, right_coords)
        del right_ids, right_coords
        self.nodes[node_index] = (sd, float(sv), left, right)
        return node_index

    # -- out-of-core build

    def build_file(self, path: str, n: int) -> int:
        if n * self.rec.itemsize <= self.mem_limit or n <= self.leaf_capacity:
            arr = np.fromfile(path, dtype=self.rec)
            os.unlink(path)
            if len(arr) != n:
                raise FormatError(f"scratch segment {path} lost records")
            ids = arr["id"].copy()
            coords = np.ascontiguousarray(arr["c"])
            del arr
            return self.build_mem(ids, coords)

        lo = np.full(self.dim, np.inf)
        hi = np.full(self.dim, -np.inf)
        for block in self._scan(path):
            np.minimum(lo, block["c"].min(axis=0), out=lo)
            np.maximum(hi, block["c"].max(axis=0), out=hi)
        sd = int(np.argmax(hi - lo))
        if lo[sd] == hi[sd]:
            sv = np.float32(lo[sd])
        else:
            sv = self._stream_median(path, sd, n, np.float32(lo[sd]), np.float32(hi[sd]))

        less = 0
        lesseq = 0
        for block in self._scan(path):
            col = block["c"][:, sd]
            less += int((col < sv).sum())
            lesseq += int((col <= sv).sum())

        m_idx = (n - 1) // 2
        ties_left = lesseq < n
        quota = m_idx + 1 - less  # used only when the tie rule degenerates
        left_path = os.path.join(self.scratch, f"seg{next(self.seg_counter)}.bin")
        right_path = os.path.join(self.scratch, f"seg{next(self.seg_counter)}.bin")
        n_left = 0
        with open(left_path, "wb") as lf, open(right_path, "wb") as rf:
            for block in self._scan(path):
                col = block["c"][:, sd]
                if ties_left:
                    mask = col <= sv
                else:
                    mask = col < sv
                    if quota > 0:
                        eq = np.nonzero(col == sv)[0]
                        take = eq[:quota]
                        mask[take] = True
                        quota -= len(take)
                lf.write(block[mask].tobytes())
                rf.write(block[~mask].tobytes())
                n_left += int(mask.sum())
        os.unlink(path)

        node_index = len(self.nodes)
        self.nodes.append(None)
        left = self.build_file(left_path, n_left)
        right = self.build_file(right_path, n - n_left)
        self.nodes[node_index] = (sd, float(sv), left, right)
        return node_index

    def _scan(self, path: str) -> Iterator[np.ndarray]:
        with open(path, "rb") as fh:
            while True:
                raw = fh.read(self.chunk_records * self.rec.itemsize)
                if not raw:
                    return
                yield np.frombuffer(raw, dtype=self.rec)

    def _stream_median(
        self, path: str, sd: int, n: int, lo: np.float32, hi: np.float32
    ) -> np.float32:
        """Exact lower median of coordinate ``sd`` over a scratch segment."""
        target = (n - 1) // 2
        nbuckets = 4096
        while True:
            if lo == hi:
                return lo
            width = np.float64(hi) - np.float64(lo)
            counts = np.zeros(nbuckets, dtype=np.int64)
            bucket_min = np.full(nbuckets, np.inf, dtype=np.float64)
            bucket_max = np.full(nbuckets, -np.inf, dtype=np.float64)
            below = 0
            for block in self._scan(path):
                col = block["c"][:, sd]
                below += int((col < lo).sum())
                sel = col[(col >= lo) & (col <= hi)].astype(np.float64)
                pos = ((sel - np.float64(lo)) / width * nbuckets).astype(np.int64)
                np.clip(pos, 0, nbuckets - 1, out=pos)
                counts += np.bincount(pos, minlength=nbuckets)
                np.minimum.at(bucket_min, pos, sel)
                np.maximum.at(bucket_max, pos, sel)
            local = target - below
            cum = 0
            for b in range(nbuckets):
                if cum + counts[b] > local:
                    break
                cum += counts[b]
            else:
                raise FormatError("median rank fell outside the scanned range")
            if counts[b] <= _COLLECT_LIMIT:
                values = []
                for block in self._scan(path):
                    col = block["c"][:, sd]
                    sel = col[(col >= lo) & (col <= hi)].astype(np.float64)
                    pos = ((sel - np.float64(lo)) / width * nbuckets).astype(np.int64)
                    np.clip(pos, 0, nbuckets - 1, out=pos)
                    values.append(sel[pos == b])
                pool = np.concatenate(values)
                pool.partition(local - cum)
                return np.float32(pool[local - cum])
            # Bucket endpoints are actual data values, so the strict-below
            # count stays consistent across refinements.
            lo = np.float32(bucket_min[b])
            hi = np.float32(bucket_max[b])


def build(
    points,
    out_path: str | os.PathLike,
    *,
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> None:
    """Build an index file from points.

    Parameters
    ----------
    points : (ids, coords) arrays, an iterable of such chunks, or a path to
        an embedding file.
    out_path : destination; written via a temp file and atomic rename.
    leaf_capacity : records per leaf page, 1..32767.
    memory_budget : bytes the build may hold resident; larger inputs are
        partitioned through scratch files next to ``out_path``.

    The build is deterministic for a given input order and parameters, and
    the in-memory and out-of-core paths produce identical files.
    """
    out_path = os.fspath(out_path)
    if not (1 <= leaf_capacity <= MAX_LEAF_CAPACITY):
        raise ValueError(
            f"leaf_capacity must be in 1..{MAX_LEAF_CAPACITY}, got {leaf_capacity}"
        )
    out_dir = os.path.dirname(os.path.abspath(out_path))
    scratch = tempfile.mkdtemp(prefix=".kdtree-build-", dir=out_dir)
    try:
        _build_into(points, out_path, leaf_capacity, memory_budget, scratch)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def _build_into(points, out_path, leaf_capacity, memory_budget, scratch):
    chunks = _as_chunks(points)
    dim = None
    builder: _Builder | None = None
    pending: list[np.ndarray] = []
    pending_bytes = 0
    spill = None
    spill_path = os.path.join(scratch, "input.bin")
    n = 0
    for ids, coords in chunks:
        ids = np.ascontiguousarray(ids, dtype=np.uint64)
        coords = np.asarray(coords)
        if coords.ndim != 2:
            raise ValueError(f"coordinates must be 2-d, got shape {coords.shape}")
        if len(ids) != len(coords):
            raise ValueError("ids and coordinates lengths differ")
        if dim is None:
            dim = coords.shape[1]
            if not (1 <= dim <= 65535):
                raise ValueError(f"dimension must fit in u16, got {dim}")
            builder = _Builder(dim, leaf_capacity, memory_budget, scratch)
        elif coords.shape[1] != dim:
            raise ValueError(f"chunk dimension {coords.shape[1]} != {dim}")
        coords = coords.astype(np.float32, copy=False)
        if not np.isfinite(coords).all():
            raise ValueError("coordinates contain non-finite values (after f32 cast)")
        block = np.empty(len(ids), dtype=builder.rec)
        block["id"] = ids
        block["c"] = coords
        n += len(ids)
        if spill is None:
            pending.append(block)
            pending_bytes += block.nbytes
            if pending_bytes > builder.mem_limit:
                spill = open(spill_path, "wb")
                for blk in pending:
                    spill.write(blk.tobytes())
                pending.clear()
        else:
            spill.write(block.tobytes())
    if n == 0:
        raise ValueError("cannot build an index from zero points")
    assert builder is not None and dim is not None

    if spill is None:
        arr = np.concatenate(pending) if len(pending) > 1 else pending[0]
        pending.clear()
        ids = arr["id"].copy()
        coords = np.ascontiguousarray(arr["c"])
        del arr
        root = builder.build_mem(ids, coords)
    else:
        spill.close()
        root = builder.build_file(spill_path, n)

    builder.leaf_file.close()
    internal = len(builder.nodes)
    if internal:
        assert root == 0, "root must be the first allocated internal node"
    leaf_section = _HEADER.size + internal * _NODE_DTYPE.itemsize
    with atomic_write(out_path) as fh:
        fh.write(
            _HEADER.pack(MAGIC, VERSION, dim, n, leaf_capacity, internal, leaf_section)
        )
        if internal:
            node_arr = np.empty(internal, dtype=_NODE_DTYPE)
            node_arr["sd"] = [t[0] for t in builder.nodes]
            node_arr["pad"] = 0
            node_arr["sv"] = [t[1] for t in builder.nodes]
            node_arr["left"] = [t[2] for t in builder.nodes]
            node_arr["right"] = [t[3] for t in builder.nodes]
            fh.write(node_arr.tobytes())
        with open(builder.leaf_path, "rb") as lf:
            shutil.copyfileobj(lf, fh, length=_STREAM_BYTES)


class KdTree:
    """Reader over an index file: internal nodes in RAM, leaves on demand.

    Any number of threads may query one open instance concurrently; leaf
    reads use positioned I/O and no shared mutable state.
    """

    def __init__(self, path: str | os.PathLike):
        path = os.fspath(path)
        self.path = path
        size = os.path.getsize(path)
        with open(path, "rb") as fh:
            header = fh.read(_HEADER.size)
            if len(header) != _HEADER.size:
                raise FormatError("truncated index: header incomplete")
            magic, version, dim, count, leaf_capacity, internal, leaf_off = (
                _HEADER.unpack(header)
            )
            if magic != MAGIC:
                raise FormatError(f"not an index file: bad magic {magic!r}")
            if version != VERSION:
                raise FormatError(f"unsupported index version {version}")
            expected_off = _HEADER.size + internal * _NODE_DTYPE.itemsize
            if leaf_off != expected_off:
                raise FormatError("corrupt index: leaf section offset mismatch")
            raw = fh.read(internal * _NODE_DTYPE.itemsize)
            if len(raw) != internal * _NODE_DTYPE.itemsize:
                raise FormatError("truncated index: node array incomplete")
        nodes = np.frombuffer(raw, dtype=_NODE_DTYPE)
        self.dim = int(dim)
        self.count = int(count)
        self.leaf_capacity = int(leaf_capacity)
        self.file_bytes = size
        self._leaf_base = leaf_off
        self._leaf_bytes = size - leaf_off
        self._rec = _record_dtype(self.dim)
        self._sd = nodes["sd"].tolist()
        self._sv = nodes["sv"].astype(np.float64).tolist()
        self._left = nodes["left"].tolist()
        self._right = nodes["right"].tolist()
        if internal:
            self._root = 0
        else:
            if count > MAX_LEAF_CAPACITY:
                raise FormatError("corrupt index: leaf-only file too large")
            self._root = _leaf_ref(count, 0)
        if (nodes["sd"] >= dim).any():
            raise FormatError("corrupt index: split dimension out of range")
        self._fd = os.open(path, os.O_RDONLY)
        try:
            self._validate_refs()
        except BaseException:
            os.close(self._fd)
            raise

    def _validate_refs(self):
        internal = len(self._sd)
        total = 0
        seen = 0
        visited = bytearray(internal)
        stack = [self._root]
        while stack:
            ref = stack.pop()
            if ref & _LEAF_BIT:
                cnt = (ref >> _COUNT_SHIFT) & _COUNT_MASK
                off = ref & _OFFSET_MASK
                if cnt == 0 and self.count > 0:
                    raise FormatError("corrupt index: empty leaf page")
                if cnt > self.leaf_capacity:
                    raise FormatError("corrupt index: leaf page above capacity")
                if off + cnt * self._rec.itemsize > self._leaf_bytes:
                    raise FormatError("corrupt index: leaf page beyond file end")
                total += cnt
            else:
                if ref >= internal:
                    raise FormatError("corrupt index: node reference out of range")
                if visited[ref]:
                    raise FormatError("corrupt index: node referenced twice")
                visited[ref] = 1
                seen += 1
                stack.append(self._left[ref])
                stack.append(self._right[ref])
        if seen != internal:
            raise FormatError("corrupt index: unreachable internal nodes")
        if total != self.count:
            raise FormatError(
                f"corrupt index: leaf pages hold {total} records, header says {self.count}"
            )

    # -- lifecycle

    def close(self):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None

    def __enter__(self) -> "KdTree":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- leaf access

    def _read_leaf(self, ref: int) -> np.ndarray:
        cnt = (ref >> _COUNT_SHIFT) & _COUNT_MASK
        off = ref & _OFFSET_MASK
        nbytes = cnt * self._rec.itemsize
        raw = os.pread(self._fd, nbytes, self._leaf_base + off)
        if len(raw) != nbytes:
            raise FormatError("truncated index: leaf page unreadable")
        return np.frombuffer(raw, dtype=self._rec)

    # -- queries

    def knn(self, query, k: int, stats: dict | None = None) -> list[Neighbor]:
        """The k nearest points to ``query`` by Euclidean distance.

        Ties are broken by ascending id; k beyond the point count returns
        everything.  ``stats`` (optional dict) accumulates
        ``distance_computations``, ``leaf_pages`` and ``internal_nodes``.
        """
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"query must have shape ({self.dim},), got {q.shape}")
        if not np.isfinite(q).all():
            raise ValueError("query contains non-finite values")
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise ValueError(f"k must be a positive integer, got {k!r}")

        top = TopK(int(k))
        counter = itertools.count()
        offsets = np.zeros(self.dim)
        pq: list[tuple[float, int, int, np.ndarray]] = [
            (0.0, next(counter), self._root, offsets)
        ]
        sds, svs = self._sd, self._sv
        lefts, rights = self._left, self._right
        n_leaves = 0
        n_internal = 0
        n_dist = 0
        while pq:
            bound, _, ref, off = heapq.heappop(pq)
            if top.full() and bound > top.worst_key():
                break
            if ref & _LEAF_BIT:
                page = self._read_leaf(ref)
                d2 = squared_distances(page["c"], q)
                top.update(d2, page["id"])
                n_leaves += 1
                n_dist += len(d2)
                continue
            n_internal += 1
            sd = sds[ref]
            delta = q[sd] - svs[ref]
            if delta <= 0.0:
                near, far = lefts[ref], rights[ref]
            else:
                near, far = rights[ref], lefts[ref]
            heapq.heappush(pq, (bound, next(counter), near, off))
            old = off[sd]
            far_bound = bound - old * old + delta * delta
            if not (top.full() and far_bound > top.worst_key()):
                far_off = off.copy()
                far_off[sd] = abs(delta)
                heapq.heappush(pq, (far_bound, next(counter), far, far_off))
        if stats is not None:
            stats["distance_computations"] = (
                stats.get("distance_computations", 0) + n_dist
            )
            stats["leaf_pages"] = stats.get("leaf_pages", 0) + n_leaves
            stats["internal_nodes"] = stats.get("internal_nodes", 0) + n_internal
        return [Neighbor(ident, float(np.sqrt(d2))) for d2, ident in top.result()]

    def range_query(self, lo, hi) -> list[int]:
        """Ids of all points inside the closed box [lo, hi], ascending."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if lo.shape != (self.dim,) or hi.shape != (self.dim,):
            raise ValueError(f"bounds must have shape ({self.dim},)")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("bounds contain non-finite values")
        if (lo > hi).any():
            bad = int(np.nonzero(lo > hi)[0][0])
            raise ValueError(f"inverted bounds in dimension {bad}: {lo[bad]} > {hi[bad]}")
        found: list[int] = []
        stack = [self._root]
        while stack:
            ref = stack.pop()
            if ref & _LEAF_BIT:
                page = self._read_leaf(ref)
                # f32 coords upcast against f64 bounds: matches a linear scan.
                coords = page["c"]
                inside = ((coords >= lo) & (coords <= hi)).all(axis=1)
                found.extend(int(i) for i in page["id"][inside])
                continue
            sd = self._sd[ref]
            sv = self._sv[ref]
            if lo[sd] <= sv:
                stack.append(self._left[ref])
            if hi[sd] >= sv:
                stack.append(self._right[ref])
        found.sort()
        return found

    def stats(self) -> dict:
        """Shape summary: counts, height, page totals, and file size."""
        leaves = 0
        height = 0
        stack = [(self._root, 0)]
        while stack:
            ref, depth = stack.pop()
            height = max(height, depth)
            if ref & _LEAF_BIT:
                leaves += 1
                continue
            stack.append((self._left[ref], depth + 1))
            stack.append((self._right[ref], depth + 1))
        return {
            "count": self.count,
            "dim": self.dim,
            "leaf_capacity": self.leaf_capacity,
            "internal_nodes": len(self._sd),
            "leaf_pages": leaves,
            "height": height,
            "file_bytes": self.file_bytes,
        }

    def check_integrity(self) -> None:
        """Deep audit: every leaf record satisfies every ancestor split plane."""
        stack: list[tuple[int, list[tuple[int, bool, float]]]] = [(self._root, [])]
        while stack:
            ref, planes = stack.pop()
            if ref & _LEAF_BIT:
                page = self._read_leaf(ref)
                coords = page["c"]
                for sd, is_left, sv in planes:
                    col = coords[:, sd].astype(np.float64)
                    ok = (col <= sv).all() if is_left else (col >= sv).all()
                    if not ok:
                        raise FormatError(
                            f"leaf violates ancestor plane (dim {sd}, "
                            f"{'<=' if is_left else '>='} {sv})"
                        )
                continue
            sd, sv = self._sd[ref], self._sv[ref]
            stack.append((self._left[ref], planes + [(sd, True, sv)]))
            stack.append((self._right[ref], planes + [(sd, False, sv)]))

    def iter_chunks(self, chunk_records: int = 65536) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Stream (ids, coords) from the leaf section, page order."""
        stack = [self._root]
        refs: list[int] = []
        while stack:
            ref = stack.pop()
            if ref & _LEAF_BIT:
                refs.append(ref)
            else:
                stack.append(self._right[ref])
                stack.append(self._left[ref])
        for ref in refs:
            page = self._read_leaf(ref)
            yield page["id"].copy(), np.ascontiguousarray(page["c"])
