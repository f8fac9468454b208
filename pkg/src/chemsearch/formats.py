"""Binary record containers and text line formats shared across the package.

All binary formats are little-endian with a 4-byte magic and a u16 version.

Fingerprint files::

    "FPB1" | u16 version=1 | u64 count | count * (u64 id + nbits/8 bytes)
    "FPC1" | u16 version=1 | u64 count | count * (u64 id + nbits * u16)

The header carries no width field; at the default width of 256 bits a binary
record is ``u64 + 32 bytes`` and a count record ``u64 + 256 * u16``.  For
non-default widths the reader recovers the width from the file size, which
must divide exactly.

Embedding files::

    "EMB1" | u16 version=1 | u16 dim | u64 count | count * (u64 id + dim * f32)

SMILES line files hold one molecule per line, optionally followed by a tab
and a string id.  Numeric record ids are derived as: a decimal id string is
used as-is; anything else (including a missing id) falls back to the 1-based
line number.  Unparseable lines go to a rejects report, never aborting the
batch.
"""

from __future__ import annotations

import contextlib
import os
import struct
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from . import molgraph
from .fingerprint import BINARY, COUNTS, Fingerprint

__all__ = [
    "FormatError",
    "atomic_write",
    "write_fingerprint_file",
    "read_fingerprint_file",
    "iter_fingerprint_chunks",
    "iter_fingerprint_vectors",
    "fingerprint_file_meta",
    "write_embedding_file",
    "read_embedding_file",
    "iter_embedding_chunks",
    "embedding_file_meta",
    "SmilesRecord",
    "SmilesReject",
    "iter_smiles_records",
    "write_rejects",
]

FPB_MAGIC = b"FPB1"
FPC_MAGIC = b"FPC1"
EMB_MAGIC = b"EMB1"
VERSION = 1

_FP_HEADER = struct.Struct("<4sHQ")
_EMB_HEADER = struct.Struct("<4sHHQ")

DEFAULT_CHUNK_RECORDS = 65536


class FormatError(ValueError):
    """Raised for malformed or truncated binary files."""


@contextlib.contextmanager
def atomic_write(path: str | os.PathLike):
    """Write to ``<path>.tmp`` and rename onto ``path`` only on success."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    fh = open(tmp, "wb")
    try:
        yield fh
        fh.flush()
        os.fsync(fh.fileno())
        fh.close()
        os.replace(tmp, path)
    except BaseException:
        fh.close()
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _read_exact(fh, nbytes: int, what: str) -> bytes:
    data = fh.read(nbytes)
    if len(data) != nbytes:
        raise FormatError(f"truncated file: expected {nbytes} bytes of {what}")
    return data


# ---------------------------------------------------------------------------
# Fingerprint files


def _fp_record_dtype(kind: str, nbits: int) -> np.dtype:
    if kind == BINARY:
        return np.dtype([("id", "<u8"), ("fp", "u1", (nbits // 8,))])
    return np.dtype([("id", "<u8"), ("fp", "<u2", (nbits,))])


def write_fingerprint_file(
    path: str | os.PathLike,
    kind: str,
    nbits: int,
    records: Iterable[tuple[int, np.ndarray]],
) -> int:
    """Stream (id, fingerprint data) records to disk; returns the count."""
    if kind not in (BINARY, COUNTS):
        raise ValueError(f"unknown fingerprint kind {kind!r}")
    magic = FPB_MAGIC if kind == BINARY else FPC_MAGIC
    dtype = _fp_record_dtype(kind, nbits)
    count = 0
    with atomic_write(path) as fh:
        fh.write(_FP_HEADER.pack(magic, VERSION, 0))
        buf = np.zeros(1, dtype=dtype)
        for ident, data in records:
            buf["id"][0] = ident
            buf["fp"][0] = data
            fh.write(buf.tobytes())
            count += 1
        fh.seek(0)
        fh.write(_FP_HEADER.pack(magic, VERSION, count))
        fh.seek(0, os.SEEK_END)
    return count


def fingerprint_file_meta(path: str | os.PathLike) -> tuple[str, int, int]:
    """Return (kind, nbits, count) from a fingerprint file header."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        magic, version, count = _FP_HEADER.unpack(
            _read_exact(fh, _FP_HEADER.size, "header")
        )
    if magic == FPB_MAGIC:
        kind = BINARY
    elif magic == FPC_MAGIC:
        kind = COUNTS
    else:
        raise FormatError(f"not a fingerprint file: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported fingerprint file version {version}")
    payload = size - _FP_HEADER.size
    if count == 0:
        raise FormatError("fingerprint file holds no records")
    if payload % count != 0:
        raise FormatError(
            f"file size {size} does not hold {count} equal-sized records"
        )
    record = payload // count
    width = record - 8
    if width <= 0:
        raise FormatError(f"impossible record size {record}")
    if kind == BINARY:
        nbits = width * 8
    else:
        if width % 2 != 0:
            raise FormatError(f"impossible count record size {record}")
        nbits = width // 2
    return kind, nbits, count


def iter_fingerprint_chunks(
    path: str | os.PathLike, chunk_records: int = DEFAULT_CHUNK_RECORDS
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (ids, matrix) chunks; matrix rows are uint8 bitsets or uint16 counts."""
    kind, nbits, count = fingerprint_file_meta(path)
    dtype = _fp_record_dtype(kind, nbits)
    with open(path, "rb") as fh:
        fh.seek(_FP_HEADER.size)
        remaining = count
        while remaining:
            take = min(chunk_records, remaining)
            raw = _read_exact(fh, take * dtype.itemsize, "fingerprint records")
            arr = np.frombuffer(raw, dtype=dtype)
            yield arr["id"].copy(), np.ascontiguousarray(arr["fp"])
            remaining -= take


def read_fingerprint_file(
    path: str | os.PathLike,
) -> tuple[str, int, np.ndarray, np.ndarray]:
    """Read a whole fingerprint file: (kind, nbits, ids, matrix)."""
    kind, nbits, _ = fingerprint_file_meta(path)
    parts = list(iter_fingerprint_chunks(path))
    ids = np.concatenate([p[0] for p in parts])
    data = np.concatenate([p[1] for p in parts])
    return kind, nbits, ids, data


def iter_fingerprint_vectors(
    path: str | os.PathLike, chunk_records: int = DEFAULT_CHUNK_RECORDS
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (ids, float64 matrix) chunks: bits become 0/1, counts cast."""
    kind, nbits, _ = fingerprint_file_meta(path)
    for ids, data in iter_fingerprint_chunks(path, chunk_records):
        if kind == BINARY:
            vecs = np.unpackbits(data, axis=1, bitorder="little")[:, :nbits]
            yield ids, vecs.astype(np.float64)
        else:
            yield ids, data.astype(np.float64)


def fingerprints_as_records(
    ids: Iterable[int], fps: Iterable[Fingerprint]
) -> Iterator[tuple[int, np.ndarray]]:
    for ident, fp in zip(ids, fps):
        yield ident, fp.data


# ---------------------------------------------------------------------------
# Embedding files


def _emb_record_dtype(dim: int) -> np.dtype:
    return np.dtype([("id", "<u8"), ("v", "<f4", (dim,))])


def write_embedding_file(
    path: str | os.PathLike,
    dim: int,
    chunks: Iterable[tuple[np.ndarray, np.ndarray]],
) -> int:
    """Stream (ids, vectors) chunks to disk as f32 records; returns the count."""
    if not (0 < dim < 65536):
        raise ValueError(f"dim must fit in u16, got {dim}")
    dtype = _emb_record_dtype(dim)
    count = 0
    with atomic_write(path) as fh:
        fh.write(_EMB_HEADER.pack(EMB_MAGIC, VERSION, dim, 0))
        for ids, vectors in chunks:
            ids = np.asarray(ids, dtype=np.uint64)
            vectors = np.asarray(vectors)
            if vectors.ndim != 2 or vectors.shape[1] != dim:
                raise ValueError(
                    f"expected vectors of dimension {dim}, got shape {vectors.shape}"
                )
            if len(ids) != len(vectors):
                raise ValueError("ids and vectors lengths differ")
            block = np.empty(len(ids), dtype=dtype)
            block["id"] = ids
            block["v"] = vectors.astype(np.float32, copy=False)
            fh.write(block.tobytes())
            count += len(ids)
        fh.seek(0)
        fh.write(_EMB_HEADER.pack(EMB_MAGIC, VERSION, dim, count))
        fh.seek(0, os.SEEK_END)
    return count


def embedding_file_meta(path: str | os.PathLike) -> tuple[int, int]:
    """Return (dim, count) from an embedding file header."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        magic, version, dim, count = _EMB_HEADER.unpack(
            _read_exact(fh, _EMB_HEADER.size, "header")
        )
    if magic != EMB_MAGIC:
        raise FormatError(f"not an embedding file: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported embedding file version {version}")
    expected = _EMB_HEADER.size + count * (8 + 4 * dim)
    if size != expected:
        raise FormatError(
            f"embedding file size {size} does not match header "
            f"(dim {dim}, count {count} -> {expected})"
        )
    return dim, count


def iter_embedding_chunks(
    path: str | os.PathLike, chunk_records: int = DEFAULT_CHUNK_RECORDS
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (ids u64, vectors f32 c x dim) chunks."""
    dim, count = embedding_file_meta(path)
    dtype = _emb_record_dtype(dim)
    with open(path, "rb") as fh:
        fh.seek(_EMB_HEADER.size)
        remaining = count
        while remaining:
            take = min(chunk_records, remaining)
            raw = _read_exact(fh, take * dtype.itemsize, "embedding records")
            arr = np.frombuffer(raw, dtype=dtype)
            yield arr["id"].copy(), np.ascontiguousarray(arr["v"])
            remaining -= take


def read_embedding_file(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Read a whole embedding file as (ids, vectors)."""
    dim, count = embedding_file_meta(path)
    ids = np.empty(count, dtype=np.uint64)
    vectors = np.empty((count, dim), dtype=np.float32)
    at = 0
    for chunk_ids, chunk_vecs in iter_embedding_chunks(path):
        ids[at : at + len(chunk_ids)] = chunk_ids
        vectors[at : at + len(chunk_ids)] = chunk_vecs
        at += len(chunk_ids)
    return ids, vectors


# ---------------------------------------------------------------------------
# SMILES line files


@dataclass(frozen=True)
class SmilesRecord:
    line_number: int
    record_id: int
    label: str
    graph: molgraph.MolecularGraph


@dataclass(frozen=True)
class SmilesReject:
    line_number: int
    text: str
    error: str


def derive_record_id(label: str, line_number: int) -> int:
    if label.isascii() and label.isdigit():
        value = int(label)
        if value < 1 << 64:
            return value
    return line_number


def iter_smiles_records(
    path: str | os.PathLike,
    on_reject: Callable[[SmilesReject], None] | None = None,
) -> Iterator[SmilesRecord]:
    """Parse a SMILES line file, routing bad lines to ``on_reject``.

    Blank lines are skipped.  The numeric record id is the decimal value of
    the id column when it is one, otherwise the 1-based line number.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            text, _, label = line.partition("\t")
            text = text.strip()
            label = label.strip()
            try:
                graph = molgraph.parse_smiles(text)
            except molgraph.SmilesError as exc:
                if on_reject is None:
                    raise
                on_reject(SmilesReject(line_number, text, str(exc)))
                continue
            yield SmilesRecord(
                line_number, derive_record_id(label, line_number), label, graph
            )


def write_rejects(path: str | os.PathLike, rejects: list[SmilesReject]) -> None:
    """Write a tab-separated rejects report: line number, error, input text."""
    with atomic_write(path) as fh:
        for r in rejects:
            fh.write(f"{r.line_number}\t{r.error}\t{r.text}\n".encode("utf-8"))
