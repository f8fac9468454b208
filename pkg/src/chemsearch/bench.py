"""Evaluation harnesses: edit-distance curves, screening AUROC, timing.

Three pieces, all deterministic:

* :func:`ged_curve`: mean approximate edit distance between queries and
  their top-k hits, as a function of k.
* :func:`vs_auroc`: virtual-screening AUROC where each database record is
  scored by its closest distance to any query active (Mann-Whitney with
  half credit for ties).
* :func:`timing_run`: single-threaded per-query wall-clock measurement
  with a warm-up pass excluded from the statistics.

:func:`make_vs_synthetic` generates labelled datasets (a separable pair of
clusters, or label-shuffled noise) for exercising the AUROC harness without
shipping a screening dataset.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .bruteforce import bf_knn
from .formats import embedding_file_meta, iter_embedding_chunks
from .ged import approx_ged
from .kdtree import KdTree
from .molgraph import MolecularGraph

__all__ = [
    "LabeledEmbeddings",
    "TimingReport",
    "ged_curve",
    "vs_auroc",
    "timing_run",
    "make_vs_synthetic",
]


@dataclass(frozen=True)
class LabeledEmbeddings:
    """Embedding records with an active/decoy label per row."""

    ids: np.ndarray  # (n,) uint64
    coords: np.ndarray  # (n, d) float
    active: np.ndarray  # (n,) bool

    def __post_init__(self):
        if self.coords.ndim != 2:
            raise ValueError(f"coords must be 2-d, got shape {self.coords.shape}")
        n = len(self.coords)
        if len(self.ids) != n or len(self.active) != n:
            raise ValueError("ids, coords and labels must have equal length")
        if self.active.dtype != np.bool_:
            raise ValueError("labels must be a boolean array (True = active)")

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True)
class TimingReport:
    """Per-query wall times in seconds plus summary statistics."""

    method: str
    n: int
    dim: int
    k: int
    times: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.times.mean())

    @property
    def std(self) -> float:
        # sample standard deviation; a single sample has none
        if len(self.times) < 2:
            return 0.0
        return float(self.times.std(ddof=1))


def ged_curve(
    queries: list[MolecularGraph],
    hits: list[list[MolecularGraph]],
    k_max: int,
) -> np.ndarray:
    """Mean approximate edit distance to the top-k hits, for k = 1..k_max.

    ``hits[i]`` is the ranked neighbor list of ``queries[i]``.  The value at
    k is the mean over queries of the mean edit distance to the first k
    hits.  No smoothing is applied.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if not queries:
        raise ValueError("need at least one query")
    if len(hits) != len(queries):
        raise ValueError(f"got {len(queries)} queries but {len(hits)} hit lists")
    for i, ranked in enumerate(hits):
        if len(ranked) < k_max:
            raise ValueError(
                f"hit list {i} has {len(ranked)} entries, need k_max={k_max}"
            )
    dist = np.empty((len(queries), k_max))
    for i, (q, ranked) in enumerate(zip(queries, hits)):
        for j in range(k_max):
            dist[i, j] = approx_ged(q, ranked[j])
    prefix = np.cumsum(dist, axis=1) / np.arange(1, k_max + 1)
    return prefix.mean(axis=0)


def vs_auroc(database: LabeledEmbeddings, query_actives: np.ndarray) -> float:
    """AUROC of ranking the database by distance to the nearest query active.

    Scores are negated min distances (higher = better); the area is the
    Mann-Whitney statistic with tied scores counted half.
    """
    queries = np.asarray(query_actives, dtype=np.float64)
    if queries.ndim != 2 or len(queries) == 0:
        raise ValueError("query_actives must be a non-empty 2-d array")
    if queries.shape[1] != database.dim:
        raise ValueError(
            f"query dimension {queries.shape[1]} != database dimension {database.dim}"
        )
    n_active = int(database.active.sum())
    n_decoy = len(database.active) - n_active
    if n_active == 0 or n_decoy == 0:
        raise ValueError(
            f"AUROC needs both classes; got {n_active} actives, {n_decoy} decoys"
        )
    coords = database.coords
    scores = np.empty(len(coords))
    chunk = 65536
    for start in range(0, len(coords), chunk):
        block = coords[start : start + chunk].astype(np.float64)
        # (records, queries) distance matrix, reduced over queries
        d2 = (
            (block * block).sum(axis=1)[:, None]
            - 2.0 * block @ queries.T
            + (queries * queries).sum(axis=1)[None, :]
        )
        np.maximum(d2, 0.0, out=d2)
        scores[start : start + chunk] = -np.sqrt(d2.min(axis=1))
    ranks = rankdata(scores, method="average")
    u = ranks[database.active].sum() - n_active * (n_active + 1) / 2.0
    return float(u / (n_active * n_decoy))


def timing_run(
    search: str,
    target,
    queries: np.ndarray,
    k: int,
    repeats: int = 1,
) -> TimingReport:
    """Measure per-query wall time for one search method.

    ``search`` is ``"kdtree"`` (``target``: KdTree or index path) or
    ``"bruteforce"`` (``target``: (ids, coords) arrays or an embedding file
    path, re-streamed per query).  One untimed warm-up pass over all queries
    precedes ``repeats`` timed passes, so the report holds
    ``repeats * len(queries)`` samples.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or len(queries) == 0:
        raise ValueError("queries must be a non-empty 2-d array")

    opened = None
    try:
        if search == "kdtree":
            if isinstance(target, KdTree):
                tree = target
            else:
                tree = opened = KdTree(target)
            n, dim = tree.count, tree.dim
            run = lambda q: tree.knn(q, k)
        elif search == "bruteforce":
            if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
                dim, n = embedding_file_meta(target)
                run = lambda q: bf_knn(iter_embedding_chunks(target), q, k)
            else:
                ids, coords = target
                n, dim = len(ids), coords.shape[1]
                run = lambda q: bf_knn((ids, coords), q, k)
        else:
            raise ValueError(f"unknown search method {search!r}")
        if queries.shape[1] != dim:
            raise ValueError(f"query dimension {queries.shape[1]} != data dimension {dim}")

        for q in queries:  # warm-up, not recorded
            run(q)
        times = np.empty(repeats * len(queries))
        i = 0
        for _ in range(repeats):
            for q in queries:
                t0 = time.perf_counter()
                run(q)
                times[i] = time.perf_counter() - t0
                i += 1
    finally:
        if opened is not None:
            opened.close()
    return TimingReport(method=search, n=int(n), dim=int(dim), k=int(k), times=times)


def make_vs_synthetic(
    n_active: int,
    n_decoy: int,
    dim: int,
    seed: int,
    mode: str = "separable",
) -> LabeledEmbeddings:
    """Synthetic screening set: ``separable`` or ``shuffled``.

    Separable puts actives in a tight cluster at the origin and decoys in a
    far one, so nearest-active ranking is perfect.  Shuffled draws every
    coordinate from one Gaussian and assigns labels independently of
    position, so AUROC concentrates at 1/2.  Ids are 1..n with actives
    first.
    """
    if n_active < 1 or n_decoy < 1:
        raise ValueError("need at least one active and one decoy")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    n = n_active + n_decoy
    if mode == "separable":
        actives = rng.normal(0.0, 0.05, size=(n_active, dim))
        offset = np.zeros(dim)
        offset[0] = 100.0
        decoys = rng.normal(0.0, 0.05, size=(n_decoy, dim)) + offset
        coords = np.vstack([actives, decoys])
        active = np.zeros(n, dtype=bool)
        active[:n_active] = True
    elif mode == "shuffled":
        coords = rng.normal(0.0, 1.0, size=(n, dim))
        active = np.zeros(n, dtype=bool)
        active[rng.permutation(n)[:n_active]] = True
    else:
        raise ValueError(f"unknown mode {mode!r}")
    ids = np.arange(1, n + 1, dtype=np.uint64)
    return LabeledEmbeddings(ids=ids, coords=coords, active=active)
