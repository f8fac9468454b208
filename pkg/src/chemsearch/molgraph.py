"""Molecular graphs with a small SMILES reader/writer and single-edit mutations.

Graphs hold heavy atoms only (implicit hydrogens are dropped), are connected,
and carry element, formal charge, and typed bonds (single, double, triple,
aromatic).  The SMILES dialect understood here covers the organic subset
(B, C, N, O, P, S, F, Cl, Br, I), lowercase aromatic atoms, bracket atoms with
charge and hydrogen counts, branches, ring closures (including ``%nn``), and
explicit bond symbols.  Stereochemistry, isotopes, wildcards and
dot-disconnected structures are recognised and rejected as unsupported.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from functools import cached_property

__all__ = [
    "Atom",
    "Bond",
    "MolecularGraph",
    "SmilesError",
    "UnsupportedFeatureError",
    "MutationError",
    "SINGLE",
    "DOUBLE",
    "TRIPLE",
    "AROMATIC",
    "ORGANIC_SUBSET",
    "ATOMIC_NUMBER",
    "parse_smiles",
    "write_smiles",
    "cycle_count",
    "mutate_substitution",
    "mutate_addition",
    "mutate_deletion",
    "random_mutant",
]

SINGLE = "single"
DOUBLE = "double"
TRIPLE = "triple"
AROMATIC = "aromatic"
BOND_ORDERS = (SINGLE, DOUBLE, TRIPLE, AROMATIC)

ORGANIC_SUBSET = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")

ATOMIC_NUMBER = {
    "B": 5,
    "C": 6,
    "N": 7,
    "O": 8,
    "F": 9,
    "P": 15,
    "S": 16,
    "Cl": 17,
    "Br": 35,
    "I": 53,
}

# Elements that may be written as lowercase aromatic tokens.
_AROMATIC_OK = frozenset("BCNOPS")
_TWO_LETTER = ("Cl", "Br")
_BOND_SYMBOL = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC}
_SYMBOL_FOR = {SINGLE: "-", DOUBLE: "=", TRIPLE: "#", AROMATIC: ":"}
_DIGITS = "0123456789"


class SmilesError(ValueError):
    """Raised for input that is not valid in the supported SMILES dialect."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (position {position})"
        super().__init__(message)
        self.position = position


class UnsupportedFeatureError(SmilesError):
    """Raised for syntactically recognised SMILES features outside the dialect."""


class MutationError(ValueError):
    """Raised when a graph edit is not applicable."""


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0


@dataclass(frozen=True)
class Bond:
    """Undirected typed bond; stored with ``i < j``."""

    i: int
    j: int
    order: str


def _bond(i: int, j: int, order: str) -> Bond:
    return Bond(i, j, order) if i < j else Bond(j, i, order)


@dataclass(frozen=True)
class MolecularGraph:
    """A connected heavy-atom graph.

    Parameters
    ----------
    atoms : tuple of Atom
        Element symbols restricted to the organic subset.
    bonds : tuple of Bond
        Undirected, no self-loops, no duplicates, endpoints in range.
    """

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]

    def __post_init__(self):
        n = len(self.atoms)
        if n < 1:
            raise ValueError("a molecular graph needs at least one atom")
        for a in self.atoms:
            if a.element not in ATOMIC_NUMBER:
                raise ValueError(f"unknown element {a.element!r}")
        seen: set[tuple[int, int]] = set()
        for b in self.bonds:
            if b.order not in BOND_ORDERS:
                raise ValueError(f"unknown bond order {b.order!r}")
            if not (0 <= b.i < n and 0 <= b.j < n):
                raise ValueError(f"bond ({b.i}, {b.j}) out of range for {n} atoms")
            if b.i == b.j:
                raise ValueError(f"self-loop on atom {b.i}")
            if b.i > b.j:
                raise ValueError("bonds must be stored with i < j")
            if (b.i, b.j) in seen:
                raise ValueError(f"duplicate bond ({b.i}, {b.j})")
            seen.add((b.i, b.j))
        if n > 1:
            self._check_connected()

    def _check_connected(self):
        n = len(self.atoms)
        adj: list[list[int]] = [[] for _ in range(n)]
        for b in self.bonds:
            adj[b.i].append(b.j)
            adj[b.j].append(b.i)
        seen = [False] * n
        stack = [0]
        seen[0] = True
        found = 1
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    found += 1
                    stack.append(v)
        if found != n:
            raise ValueError("graph is not connected")

    @cached_property
    def _adjacency(self) -> tuple[tuple[tuple[int, str], ...], ...]:
        adj: list[list[tuple[int, str]]] = [[] for _ in self.atoms]
        for b in self.bonds:
            adj[b.i].append((b.j, b.order))
            adj[b.j].append((b.i, b.order))
        return tuple(tuple(sorted(nbrs)) for nbrs in adj)

    def neighbors(self, index: int) -> tuple[tuple[int, str], ...]:
        """(neighbor index, bond order) pairs of ``index``, sorted by neighbor."""
        return self._adjacency[index]

    def degree(self, index: int) -> int:
        return len(self._adjacency[index])

    @cached_property
    def aromatic_flags(self) -> tuple[bool, ...]:
        """Per-atom flag: True iff the atom has an incident aromatic bond."""
        flags = [False] * len(self.atoms)
        for b in self.bonds:
            if b.order == AROMATIC:
                flags[b.i] = True
                flags[b.j] = True
        return tuple(flags)


def cycle_count(graph: MolecularGraph) -> int:
    """Number of independent cycles (bonds - atoms + 1 for a connected graph)."""
    return len(graph.bonds) - len(graph.atoms) + 1


# ---------------------------------------------------------------------------
# SMILES reading


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[Atom] = []
        self.aromatic_token: list[bool] = []
        self.bonds: list[Bond] = []
        self.bond_keys: set[tuple[int, int]] = set()
        self.prev: int | None = None
        self.pending: str | None = None
        self.pending_pos = 0
        self.stack: list[int] = []
        # ring number -> (atom index, explicit order or None, position)
        self.open_rings: dict[int, tuple[int, str | None, int]] = {}

    def fail(self, message: str, pos: int | None = None):
        raise SmilesError(message, self.pos if pos is None else pos)

    def unsupported(self, message: str, pos: int | None = None):
        raise UnsupportedFeatureError(
            f"unsupported feature: {message}", self.pos if pos is None else pos
        )

    def run(self) -> MolecularGraph:
        text = self.text
        if not text:
            raise SmilesError("empty SMILES string")
        while self.pos < len(text):
            ch = text[self.pos]
            if ch == "(":
                if self.prev is None:
                    self.fail("branch opened before any atom")
                if self.pending is not None:
                    self.fail("bond symbol before '('", self.pending_pos)
                self.stack.append(self.prev)
                self.pos += 1
            elif ch == ")":
                if not self.stack:
                    self.fail("unbalanced ')'")
                if self.pending is not None:
                    self.fail("dangling bond before ')'", self.pending_pos)
                self.prev = self.stack.pop()
                self.pos += 1
            elif ch in _BOND_SYMBOL:
                if self.prev is None:
                    self.fail(f"bond symbol {ch!r} before any atom")
                if self.pending is not None:
                    self.fail("two bond symbols in a row")
                self.pending = _BOND_SYMBOL[ch]
                self.pending_pos = self.pos
                self.pos += 1
            elif ch in "/\\":
                self.unsupported("stereochemistry bond symbols")
            elif ch == ".":
                self.unsupported("dot-disconnected structures")
            elif ch == "*":
                self.unsupported("wildcard atoms")
            elif ch == "@":
                self.unsupported("chirality markers")
            elif ch == "%":
                m = text[self.pos + 1 : self.pos + 3]
                if len(m) != 2 or not all(c in _DIGITS for c in m):
                    self.fail("'%' must be followed by two digits")
                self.ring(int(m))
                self.pos += 3
            elif ch in _DIGITS:
                self.ring(int(ch))
                self.pos += 1
            elif ch == "[":
                self.bracket_atom()
            else:
                self.organic_atom(ch)
        if self.stack:
            self.fail("unbalanced '(': missing ')'")
        if self.pending is not None:
            self.fail("trailing bond symbol", self.pending_pos)
        if self.open_rings:
            nums = ", ".join(str(k) for k in sorted(self.open_rings))
            self.fail(f"unmatched ring closure {nums}")
        if not self.atoms:
            raise SmilesError("no atoms in SMILES string")
        return MolecularGraph(tuple(self.atoms), tuple(self.bonds))

    def organic_atom(self, ch: str):
        two = self.text[self.pos : self.pos + 2]
        if two in _TWO_LETTER:
            self.add_atom(two, 0, aromatic=False)
            self.pos += 2
        elif ch in "BCNOPSFI":
            self.add_atom(ch, 0, aromatic=False)
            self.pos += 1
        elif ch in "bcnops":
            self.add_atom(ch.upper(), 0, aromatic=True)
            self.pos += 1
        else:
            self.fail(f"unexpected character {ch!r}")

    def bracket_atom(self):
        start = self.pos
        end = self.text.find("]", start)
        if end < 0:
            self.fail("unbalanced '[': missing ']'")
        body = self.text[start + 1 : end]
        i = 0
        if i < len(body) and body[i] in _DIGITS:
            self.unsupported("isotope labels", start)
        element = None
        aromatic = False
        if body[i : i + 2] in _TWO_LETTER:
            element = body[i : i + 2]
            i += 2
        elif i < len(body) and body[i] in "BCNOPSFI":
            element = body[i]
            i += 1
        elif i < len(body) and body[i] in "bcnops":
            element = body[i].upper()
            aromatic = True
            i += 1
        elif i < len(body) and body[i] == "H":
            self.unsupported("explicit hydrogen atoms", start)
        elif i < len(body) and body[i] == "@":
            self.unsupported("chirality markers", start)
        else:
            got = body[i : i + 2] if body else ""
            self.fail(f"unknown element {got!r} in bracket atom", start)
        if i < len(body) and body[i] == "@":
            self.unsupported("chirality markers", start)
        # hydrogen count: parsed for validity, then discarded (implicit-H model)
        if i < len(body) and body[i] == "H":
            i += 1
            while i < len(body) and body[i] in _DIGITS:
                i += 1
        charge = 0
        if i < len(body) and body[i] in "+-":
            sign = 1 if body[i] == "+" else -1
            symbol = body[i]
            i += 1
            if i < len(body) and body[i] in _DIGITS:
                j = i
                while j < len(body) and body[j] in _DIGITS:
                    j += 1
                charge = sign * int(body[i:j])
                i = j
            else:
                charge = sign
                while i < len(body) and body[i] == symbol:
                    charge += sign
                    i += 1
        if i != len(body):
            self.fail(f"unexpected {body[i]!r} in bracket atom", start + 1 + i)
        self.add_atom(element, charge, aromatic=aromatic)
        self.pos = end + 1

    def add_atom(self, element: str, charge: int, aromatic: bool):
        idx = len(self.atoms)
        self.atoms.append(Atom(element, charge))
        self.aromatic_token.append(aromatic)
        if self.prev is not None:
            order = self.pending
            if order is None:
                both = aromatic and self.aromatic_token[self.prev]
                order = AROMATIC if both else SINGLE
            self.add_bond(self.prev, idx, order)
        self.prev = idx
        self.pending = None

    def ring(self, number: int):
        if self.prev is None:
            self.fail("ring closure before any atom")
        if number in self.open_rings:
            other, other_order, _ = self.open_rings.pop(number)
            order = self.pending
            if order is not None and other_order is not None and order != other_order:
                self.fail(f"ring {number} closed with conflicting bond orders")
            order = order or other_order
            if order is None:
                both = self.aromatic_token[other] and self.aromatic_token[self.prev]
                order = AROMATIC if both else SINGLE
            if other == self.prev:
                self.fail(f"ring {number} closes onto its own atom")
            self.add_bond(other, self.prev, order)
        else:
            self.open_rings[number] = (self.prev, self.pending, self.pos)
        self.pending = None

    def add_bond(self, i: int, j: int, order: str):
        key = (min(i, j), max(i, j))
        if key in self.bond_keys:
            self.fail(f"duplicate bond between atoms {key[0]} and {key[1]}")
        self.bond_keys.add(key)
        self.bonds.append(_bond(i, j, order))


def parse_smiles(text: str) -> MolecularGraph:
    """Parse a SMILES string in the supported dialect into a MolecularGraph.

    Parameters
    ----------
    text : str
        One SMILES term; surrounding whitespace is not allowed.

    Returns
    -------
    MolecularGraph

    Raises
    ------
    SmilesError
        Malformed input: unbalanced parentheses or brackets, unmatched ring
        closures, unknown elements, stray characters.
    UnsupportedFeatureError
        Recognised-but-unsupported notation: stereochemistry (``/ \\ @``),
        isotopes, wildcards, explicit hydrogen atoms, dot-disconnection.
    """
    if not isinstance(text, str):
        raise SmilesError(f"expected str, got {type(text).__name__}")
    return _Parser(text).run()


# ---------------------------------------------------------------------------
# SMILES writing


def write_smiles(graph: MolecularGraph) -> str:
    """Serialise a graph back to SMILES.

    The output re-parses to a graph isomorphic to the input (same elements,
    charges, and typed bonds).  Traversal starts at atom 0 and visits
    neighbors in index order, so the output is deterministic.
    """
    n = len(graph.atoms)
    lowercase = [
        graph.aromatic_flags[i] and graph.atoms[i].element in _AROMATIC_OK
        for i in range(n)
    ]

    # Iterative depth-first spanning tree; non-tree bonds become ring closures.
    visited = [False] * n
    order: list[int] = []
    children: list[list[int]] = [[] for _ in range(n)]
    tree_edges: set[tuple[int, int]] = set()
    stack: list[tuple[int, int]] = [(0, -1)]
    while stack:
        u, p = stack.pop()
        if visited[u]:
            continue
        visited[u] = True
        order.append(u)
        if p >= 0:
            children[p].append(u)
            tree_edges.add((min(u, p), max(u, p)))
        for v, _ in reversed(graph.neighbors(u)):
            if not visited[v]:
                stack.append((v, u))
    rank = {u: t for t, u in enumerate(order)}
    ring_bonds = [b for b in graph.bonds if (b.i, b.j) not in tree_edges]

    # Ring-closure digits, allocated in emission order with reuse after close.
    opens: dict[int, list[int]] = {u: [] for u in range(n)}
    closes: dict[int, list[tuple[int, int, str]]] = {u: [] for u in range(n)}
    events = sorted(
        ring_bonds, key=lambda b: (min(rank[b.i], rank[b.j]), max(rank[b.i], rank[b.j]))
    )
    free = list(range(1, 100))
    active: list[tuple[int, int]] = []  # (closing rank, number)
    for b in events:
        first, second = sorted((b.i, b.j), key=rank.__getitem__)
        for close_rank, num in active[:]:
            if close_rank < rank[first]:
                active.remove((close_rank, num))
                free.append(num)
        free.sort()
        if not free:
            raise ValueError("more than 99 ring closures open at once")
        num = free.pop(0)
        active.append((rank[second], num))
        opens[first].append(num)
        closes[second].append((num, first, b.order))

    def bond_token(i: int, j: int, bond_order: str) -> str:
        both_lower = lowercase[i] and lowercase[j]
        if bond_order == AROMATIC:
            return "" if both_lower else ":"
        if bond_order == SINGLE:
            return "-" if both_lower else ""
        return _SYMBOL_FOR[bond_order]

    def atom_token(i: int) -> str:
        atom = graph.atoms[i]
        symbol = atom.element.lower() if lowercase[i] else atom.element
        if atom.charge == 0:
            return symbol
        sign = "+" if atom.charge > 0 else "-"
        mag = abs(atom.charge)
        return f"[{symbol}{sign}{mag if mag > 1 else ''}]"

    def ring_tokens(i: int) -> str:
        parts = []
        for num in opens[i]:
            parts.append(str(num) if num < 10 else f"%{num:02d}")
        for num, other, bond_order in closes[i]:
            parts.append(bond_token(other, i, bond_order))
            parts.append(str(num) if num < 10 else f"%{num:02d}")
        return "".join(parts)

    bond_order_of = {(b.i, b.j): b.order for b in graph.bonds}

    def order_between(u: int, v: int) -> str:
        return bond_order_of[(min(u, v), max(u, v))]

    # Iterative emission keeps long chains clear of the recursion limit.
    out: list[str] = []
    frames: list[tuple[str, int | str]] = [("atom", 0)]
    while frames:
        kind, payload = frames.pop()
        if kind == "text":
            out.append(payload)  # type: ignore[arg-type]
            continue
        u = int(payload)
        out.append(atom_token(u))
        out.append(ring_tokens(u))
        kids = children[u]
        for t in range(len(kids) - 1, -1, -1):
            v = kids[t]
            tok = bond_token(u, v, order_between(u, v))
            if t < len(kids) - 1:
                frames.append(("text", ")"))
                frames.append(("atom", v))
                frames.append(("text", "(" + tok))
            else:
                frames.append(("atom", v))
                frames.append(("text", tok))
    return "".join(out)


# ---------------------------------------------------------------------------
# Mutations


def _check_index(graph: MolecularGraph, index: int):
    if not (0 <= index < len(graph.atoms)):
        raise MutationError(
            f"atom index {index} out of range for {len(graph.atoms)} atoms"
        )


def _check_element(element: str):
    if element not in ORGANIC_SUBSET:
        raise MutationError(f"element {element!r} not in the supported set")


def mutate_substitution(
    graph: MolecularGraph, index: int, new_element: str
) -> MolecularGraph:
    """Replace the element label of one atom, keeping bonds and charge."""
    _check_index(graph, index)
    _check_element(new_element)
    if graph.atoms[index].element == new_element:
        raise MutationError(f"substitution at atom {index} would be a no-op")
    atoms = list(graph.atoms)
    atoms[index] = replace(atoms[index], element=new_element)
    return MolecularGraph(tuple(atoms), graph.bonds)


def mutate_addition(
    graph: MolecularGraph, attach_index: int, new_element: str, bond_order: str = SINGLE
) -> MolecularGraph:
    """Append one new atom bonded to ``attach_index``.

    Aromatic attachment bonds are rejected: a lone new atom cannot extend an
    aromatic system.
    """
    _check_index(graph, attach_index)
    _check_element(new_element)
    if bond_order not in (SINGLE, DOUBLE, TRIPLE):
        raise MutationError(
            f"addition bond order must be non-aromatic, got {bond_order!r}"
        )
    new_index = len(graph.atoms)
    return MolecularGraph(
        graph.atoms + (Atom(new_element),),
        graph.bonds + (_bond(attach_index, new_index, bond_order),),
    )


def mutate_deletion(graph: MolecularGraph, index: int) -> MolecularGraph:
    """Remove one singly-bonded atom together with its bond."""
    _check_index(graph, index)
    if len(graph.atoms) < 2:
        raise MutationError("cannot delete the only atom")
    if graph.degree(index) != 1:
        raise MutationError(
            f"atom {index} has degree {graph.degree(index)}; only degree-1 atoms are removable"
        )
    atoms = tuple(a for t, a in enumerate(graph.atoms) if t != index)

    def shift(t: int) -> int:
        return t - 1 if t > index else t

    bonds = tuple(
        _bond(shift(b.i), shift(b.j), b.order)
        for b in graph.bonds
        if index not in (b.i, b.j)
    )
    return MolecularGraph(atoms, bonds)


def random_mutant(graph: MolecularGraph, seed: int) -> MolecularGraph:
    """Apply one random single edit, reproducibly.

    The edit kind is drawn uniformly from the kinds feasible for ``graph``
    (deletion needs a degree-1 atom and at least two atoms); its parameters
    are drawn uniformly from the valid choices.  Additions attach with a
    single bond.  The same (graph, seed) pair always yields the same mutant.
    """
    rng = random.Random(seed)
    n = len(graph.atoms)
    removable = [i for i in range(n) if graph.degree(i) == 1]
    kinds = ["substitution", "addition"]
    if removable and n >= 2:
        kinds.append("deletion")
    kind = rng.choice(kinds)
    if kind == "substitution":
        index = rng.randrange(n)
        choices = [e for e in ORGANIC_SUBSET if e != graph.atoms[index].element]
        return mutate_substitution(graph, index, rng.choice(choices))
    if kind == "addition":
        return mutate_addition(graph, rng.randrange(n), rng.choice(ORGANIC_SUBSET))
    return mutate_deletion(graph, rng.choice(removable))
