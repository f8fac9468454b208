"""Graph edit distance under unit costs.

Two solvers over molecular graphs:

* ``approx_ged`` builds the classic (n1+n2) x (n1+n2) bipartite cost matrix
  whose substitution entries fold in an optimal matching of the two atoms'
  incident-bond label multisets, solves the linear assignment, and prices the
  edit path that the node mapping induces.  The result is an upper bound on
  the exact distance.
* ``exact_ged_tiny`` runs a best-first search over partial node mappings with
  an admissible label-multiset heuristic.  It is exponential and therefore
  capped at small graphs; its role is to anchor the approximation in tests.

Costs are uniform: node insert/delete/relabel = 1, edge insert/delete = 1,
edge order change = 1.  Node labels are compared as element symbols only.
"""

from __future__ import annotations

import heapq
import itertools
from collections import Counter

import numpy as np
from scipy.optimize import linear_sum_assignment

from .molgraph import MolecularGraph

__all__ = [
    "AssignmentError",
    "GraphTooLargeError",
    "assignment_solve",
    "approx_ged",
    "exact_ged_tiny",
]


class AssignmentError(ValueError):
    """Raised for cost matrices that admit no finite assignment."""


class GraphTooLargeError(ValueError):
    """Raised when a graph exceeds the exact solver's size cap."""


def assignment_solve(costs) -> tuple[np.ndarray, float]:
    """Solve the square linear assignment problem.

    Parameters
    ----------
    costs : array-like, shape (n, n)
        Non-negative entries; ``inf`` marks forbidden pairings.

    Returns
    -------
    assignment : ndarray of int
        ``assignment[row] = column`` of the minimising permutation.
    total : float
        Sum of the selected entries.

    Raises
    ------
    AssignmentError
        Non-square input, negative or NaN entries, or no feasible assignment
        (some row or column is entirely infinite).
    """
    matrix = np.asarray(costs, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise AssignmentError(f"cost matrix must be square, got shape {matrix.shape}")
    if matrix.size == 0:
        raise AssignmentError("cost matrix is empty")
    if np.isnan(matrix).any():
        raise AssignmentError("cost matrix contains NaN")
    if (matrix < 0).any():
        raise AssignmentError("cost matrix contains negative entries")
    try:
        rows, cols = linear_sum_assignment(matrix)
    except ValueError as exc:
        raise AssignmentError(f"infeasible cost matrix: {exc}") from exc
    total = float(matrix[rows, cols].sum())
    if not np.isfinite(total):
        raise AssignmentError("no finite assignment exists")
    assignment = np.empty(matrix.shape[0], dtype=np.int64)
    assignment[rows] = cols
    return assignment, total


def _edge_label_cost(orders_a: list[str], orders_b: list[str]) -> int:
    # Optimal matching for 0/1 substitution with unit insert/delete reduces to
    # pairing equal labels first: cost = max(len) - matched.
    matched = sum((Counter(orders_a) & Counter(orders_b)).values())
    return max(len(orders_a), len(orders_b)) - matched


def _incident_orders(g: MolecularGraph) -> list[list[str]]:
    return [[order for _, order in g.neighbors(i)] for i in range(len(g.atoms))]


def _edge_order_map(g: MolecularGraph) -> dict[tuple[int, int], str]:
    return {(b.i, b.j): b.order for b in g.bonds}


def _directed_approx(g1: MolecularGraph, g2: MolecularGraph) -> float:
    n1, n2 = len(g1.atoms), len(g2.atoms)
    inc1, inc2 = _incident_orders(g1), _incident_orders(g2)
    size = n1 + n2
    costs = np.full((size, size), np.inf)
    for i in range(n1):
        for j in range(n2):
            label = 0 if g1.atoms[i].element == g2.atoms[j].element else 1
            costs[i, j] = label + _edge_label_cost(inc1[i], inc2[j])
    for i in range(n1):
        costs[i, n2 + i] = 1 + len(inc1[i])
    for j in range(n2):
        costs[n1 + j, j] = 1 + len(inc2[j])
    costs[n1:, n2:] = 0.0
    assignment, _ = assignment_solve(costs)

    mapping = [int(assignment[i]) if assignment[i] < n2 else -1 for i in range(n1)]
    cost = 0
    for i in range(n1):
        if mapping[i] < 0:
            cost += 1
        elif g1.atoms[i].element != g2.atoms[mapping[i]].element:
            cost += 1
    mapped_targets = {j for j in mapping if j >= 0}
    cost += n2 - len(mapped_targets)

    edges2 = _edge_order_map(g2)
    covered: set[tuple[int, int]] = set()
    for b in g1.bonds:
        u, v = mapping[b.i], mapping[b.j]
        if u < 0 or v < 0:
            cost += 1
            continue
        key = (min(u, v), max(u, v))
        other = edges2.get(key)
        if other is None:
            cost += 1
        else:
            covered.add(key)
            if other != b.order:
                cost += 1
    cost += sum(1 for key in edges2 if key not in covered)
    return float(cost)


def approx_ged(g1: MolecularGraph, g2: MolecularGraph) -> float:
    """Bipartite upper bound on graph edit distance, symmetric by construction.

    Both directions are priced and the smaller induced edit-path cost is
    returned; each direction's mapping yields a genuine edit path, so the
    result never undercuts the exact distance.
    """
    if g1.atoms == g2.atoms and g1.bonds == g2.bonds:
        return 0.0
    return min(_directed_approx(g1, g2), _directed_approx(g2, g1))


def exact_ged_tiny(
    g1: MolecularGraph, g2: MolecularGraph, max_atoms: int = 8
) -> float:
    """Exact graph edit distance for small graphs.

    Best-first search over partial node mappings (g1 atoms in index order are
    mapped to unused g2 atoms or deleted), expanding by total cost plus an
    admissible label-multiset lower bound.  Intended as a test oracle.

    Raises
    ------
    GraphTooLargeError
        If either graph has more than ``max_atoms`` atoms.
    """
    n1, n2 = len(g1.atoms), len(g2.atoms)
    if n1 > max_atoms or n2 > max_atoms:
        raise GraphTooLargeError(
            f"exact solver capped at {max_atoms} atoms, got {n1} and {n2}"
        )
    labels1 = [a.element for a in g1.atoms]
    labels2 = [a.element for a in g2.atoms]
    edges1 = _edge_order_map(g1)
    edges2 = _edge_order_map(g2)
    adj1 = [[(v, o) for v, o in g1.neighbors(i)] for i in range(n1)]

    suffix_labels: list[Counter] = [Counter() for _ in range(n1 + 1)]
    for i in range(n1 - 1, -1, -1):
        suffix_labels[i] = suffix_labels[i + 1].copy()
        suffix_labels[i][labels1[i]] += 1

    def heuristic(i: int, used: frozenset[int]) -> int:
        r1 = n1 - i
        remaining2 = [labels2[j] for j in range(n2) if j not in used]
        r2 = len(remaining2)
        matched = sum((suffix_labels[i] & Counter(remaining2)).values())
        return max(r1, r2) - matched

    def completion(mapping: tuple[int, ...], used: frozenset[int]) -> int:
        cost = n2 - len(used)
        for (x, y) in edges2:
            if x not in used or y not in used:
                cost += 1
        return cost

    upper = _directed_approx(g1, g2)

    counter = itertools.count()
    start = (heuristic(0, frozenset()), next(counter), 0.0, (), frozenset())
    frontier = [start]
    best = upper
    while frontier:
        f, _, g, mapping, used = heapq.heappop(frontier)
        if f > best:
            break
        i = len(mapping)
        if i == n1:
            total = g + completion(mapping, used)
            if total < best:
                best = total
            continue
        incident = [(u, o) for u, o in adj1[i] if u < i]
        # map atom i to an unused g2 atom
        for j in range(n2):
            if j in used:
                continue
            step = 0 if labels1[i] == labels2[j] else 1
            for u, o1 in incident:
                v = mapping[u]
                if v < 0:
                    step += 1
                    continue
                o2 = edges2.get((min(v, j), max(v, j)))
                if o2 is None:
                    step += 1
                elif o2 != o1:
                    step += 1
            for v in used:
                key = (min(v, j), max(v, j))
                if key in edges2:
                    u = mapping.index(v)
                    if not any(w == u for w, _ in incident):
                        step += 1
            g_new = g + step
            used_new = used | {j}
            h = heuristic(i + 1, used_new)
            if g_new + h <= best:
                heapq.heappush(
                    frontier,
                    (g_new + h, next(counter), g_new, mapping + (j,), used_new),
                )
        # delete atom i
        g_new = g + 1 + len(incident)
        h = heuristic(i + 1, used)
        if g_new + h <= best:
            heapq.heappush(
                frontier, (g_new + h, next(counter), g_new, mapping + (-1,), used)
            )
    return float(best)
