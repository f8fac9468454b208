"""Folded circular fingerprints over molecular graphs.

Each atom starts from a stable 64-bit hash of (atomic number, degree, formal
charge, aromatic flag).  For each radius step the identifier is rehashed
together with the sorted (bond-order code, neighbor identifier) list, and the
atom emits one identifier per radius until its environment stops growing
(isolated atom, or the whole molecule already covered).  Emitted identifiers
are folded modulo the bit width: set membership gives the binary fingerprint,
multiplicity the count fingerprint.

Hashing is FNV-1a over a little-endian encoding of the fields, so fingerprints
are bit-identical across processes and platforms; nothing here depends on
Python's salted ``hash``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .molgraph import (
    AROMATIC,
    ATOMIC_NUMBER,
    DOUBLE,
    SINGLE,
    TRIPLE,
    MolecularGraph,
)

__all__ = [
    "Fingerprint",
    "BINARY",
    "COUNTS",
    "ecfp",
    "ecfc",
    "tanimoto_distance",
]

BINARY = "binary"
COUNTS = "counts"

BOND_CODE = {SINGLE: 1, DOUBLE: 2, TRIPLE: 3, AROMATIC: 4}

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


def _fnv1a(fields: tuple[int, ...]) -> int:
    """FNV-1a over the concatenated 8-byte little-endian field encodings."""
    h = _FNV_OFFSET
    for value in fields:
        v = value & _MASK64
        for _ in range(8):
            h = ((h ^ (v & 0xFF)) * _FNV_PRIME) & _MASK64
            v >>= 8
    return h


@dataclass(frozen=True, eq=False)
class Fingerprint:
    """A folded fingerprint.

    ``data`` is a uint8 bitset of ``nbits // 8`` bytes for ``binary`` kind,
    or a uint16 array of length ``nbits`` for ``counts`` kind.
    """

    kind: str
    nbits: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in (BINARY, COUNTS):
            raise ValueError(f"unknown fingerprint kind {self.kind!r}")
        if self.nbits % 8 != 0 or self.nbits <= 0:
            raise ValueError(f"nbits must be a positive multiple of 8, got {self.nbits}")
        expected = self.nbits // 8 if self.kind == BINARY else self.nbits
        if len(self.data) != expected:
            raise ValueError(
                f"{self.kind} fingerprint of {self.nbits} bits needs "
                f"{expected} entries, got {len(self.data)}"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.nbits == other.nbits
            and bool(np.array_equal(self.data, other.data))
        )

    def popcount(self) -> int:
        if self.kind == BINARY:
            return int(_POPCOUNT[self.data].sum())
        return int(np.count_nonzero(self.data))


def _emitted_identifiers(graph: MolecularGraph, radius: int) -> list[int]:
    n = len(graph.atoms)
    flags = graph.aromatic_flags
    ids = [
        _fnv1a(
            (
                ATOMIC_NUMBER[graph.atoms[i].element],
                graph.degree(i),
                graph.atoms[i].charge,
                1 if flags[i] else 0,
            )
        )
        for i in range(n)
    ]
    env: list[set[int]] = [{i} for i in range(n)]
    alive = [True] * n
    emitted = list(ids)
    for _ in range(radius):
        new_ids = []
        for i in range(n):
            pairs = sorted(
                (BOND_CODE[order], ids[j]) for j, order in graph.neighbors(i)
            )
            fields: list[int] = [ids[i]]
            for code, nbr in pairs:
                fields.append(code)
                fields.append(nbr)
            new_ids.append(_fnv1a(tuple(fields)))
        new_env = [
            env[i].union(*(env[j] for j, _ in graph.neighbors(i)))
            if graph.degree(i)
            else env[i]
            for i in range(n)
        ]
        for i in range(n):
            if alive[i] and len(new_env[i]) > len(env[i]):
                emitted.append(new_ids[i])
            else:
                alive[i] = False
        ids = new_ids
        env = new_env
    return emitted


def ecfc(graph: MolecularGraph, radius: int = 2, nbits: int = 256) -> Fingerprint:
    """Count fingerprint: each emitted identifier increments bin ``id % nbits``.

    The total count equals the number of emissions, at most
    ``(radius + 1) * len(graph.atoms)``.
    """
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if nbits <= 0 or nbits % 8:
        raise ValueError(f"nbits must be a positive multiple of 8, got {nbits}")
    counts = np.zeros(nbits, dtype=np.int64)
    for ident in _emitted_identifiers(graph, radius):
        counts[ident % nbits] += 1
    return Fingerprint(COUNTS, nbits, counts.clip(0, 65535).astype(np.uint16))


def ecfp(graph: MolecularGraph, radius: int = 2, nbits: int = 256) -> Fingerprint:
    """Binary fingerprint: bit ``id % nbits`` is set for each emitted identifier."""
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if nbits <= 0 or nbits % 8:
        raise ValueError(f"nbits must be a positive multiple of 8, got {nbits}")
    bits = np.zeros(nbits // 8, dtype=np.uint8)
    for ident in _emitted_identifiers(graph, radius):
        bit = ident % nbits
        bits[bit >> 3] |= 1 << (bit & 7)
    return Fingerprint(BINARY, nbits, bits)


def tanimoto_distance(a: Fingerprint, b: Fingerprint) -> float:
    """1 - |a AND b| / |a OR b| for binary fingerprints of equal width.

    Raises
    ------
    ValueError
        Kind mismatch, width mismatch, or two all-zero fingerprints (the
        similarity is undefined: the union is empty).
    """
    if a.kind != BINARY or b.kind != BINARY:
        raise ValueError(
            f"tanimoto distance is defined on binary fingerprints, "
            f"got {a.kind!r} and {b.kind!r}"
        )
    if a.nbits != b.nbits:
        raise ValueError(f"fingerprint widths differ: {a.nbits} vs {b.nbits}")
    inter = int(_POPCOUNT[a.data & b.data].sum())
    union = int(_POPCOUNT[a.data | b.data].sum())
    if union == 0:
        raise ValueError("tanimoto distance of two all-zero fingerprints is undefined")
    return 1.0 - inter / union
