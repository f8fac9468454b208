"""Command-line pipeline: fingerprint -> reduce -> index -> query -> bench.

Every subcommand validates its flags before touching outputs, writes files
through a temp-name-plus-rename so interrupted runs leave no partial
results, and is deterministic for a fixed seed: rerunning with the same
inputs produces byte-identical outputs (timing measurements excepted, for
the obvious reason).

Exit codes: 0 success, 1 usage error, 2 data error (malformed SMILES lines
additionally produce a rejects report), 3 I/O error.
"""

from __future__ import annotations

import argparse
import random
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bench as bench_mod
from . import kdtree as kdtree_mod
from .bruteforce import bf_knn_multi
from .fingerprint import BINARY, COUNTS, ecfc, ecfp
from .formats import (
    EMB_MAGIC,
    FPB_MAGIC,
    FPC_MAGIC,
    FormatError,
    atomic_write,
    iter_embedding_chunks,
    iter_fingerprint_vectors,
    iter_smiles_records,
    read_embedding_file,
    write_embedding_file,
    write_fingerprint_file,
    write_rejects,
)
from .kdtree import KdTree
from .molgraph import parse_smiles, random_mutant, write_smiles
from .reduce import apply_model, load_model, make_srp, pca_fit

KDT_MAGIC = b"KDT1"

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; argparse's default of 2 is our data-error code
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_bytes(text: str) -> int:
    """Byte count with optional k/m/g suffix (binary units)."""
    t = text.strip().lower()
    scale = 1
    if t and t[-1] in "kmg":
        scale = {"k": 2**10, "m": 2**20, "g": 2**30}[t[-1]]
        t = t[:-1]
    try:
        value = int(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a byte count: {text!r}")
    if value <= 0:
        raise argparse.ArgumentTypeError(f"byte count must be positive: {text!r}")
    return value * scale


def _sniff_magic(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read(4)


def _emit_lines(out_path: str | None, lines) -> None:
    if out_path is None:
        for line in lines:
            print(line)
        return
    with atomic_write(out_path) as fh:
        for line in lines:
            fh.write((line + "\n").encode())


def _rejects_path(args) -> str:
    if args.rejects:
        return args.rejects
    base = args.out if getattr(args, "out", None) else args.input
    return base + ".rejects.tsv"


def _finish_with_rejects(args, rejects) -> int:
    if not rejects:
        return 0
    path = _rejects_path(args)
    write_rejects(path, rejects)
    print(
        f"warning: {len(rejects)} line(s) rejected, see {path}",
        file=sys.stderr,
    )
    return 2


# ---------------------------------------------------------------------------
# fingerprint / mutate


def cmd_fingerprint(args) -> int:
    rejects = []
    make = ecfp if args.kind == BINARY else ecfc
    def records():
        for rec in iter_smiles_records(args.input, on_reject=rejects.append):
            fp = make(rec.graph, radius=args.radius, nbits=args.nbits)
            yield rec.record_id, fp.data
    n = write_fingerprint_file(args.out, args.kind, args.nbits, records())
    print(f"wrote {n} fingerprints to {args.out}", file=sys.stderr)
    return _finish_with_rejects(args, rejects)


def cmd_mutate(args) -> int:
    rejects = []
    rng = random.Random(args.seed)
    lines = []
    for rec in iter_smiles_records(args.input, on_reject=rejects.append):
        for j in range(args.count):
            g = rec.graph
            for _ in range(args.steps):
                g = random_mutant(g, seed=rng.getrandbits(63))
            lines.append(f"{write_smiles(g)}\t{rec.label or rec.record_id}_{j + 1}")
    _emit_lines(args.out, lines)
    return _finish_with_rejects(args, rejects)


# ---------------------------------------------------------------------------
# reduce


def cmd_reduce_fit_pca(args) -> int:
    chunks = (vecs for _, vecs in iter_fingerprint_vectors(args.input))
    model = pca_fit(chunks, args.d_out)
    model.save(args.out)
    print(f"wrote PCA model ({model.d_in} -> {model.d_out}) to {args.out}", file=sys.stderr)
    return 0


def cmd_reduce_make_srp(args) -> int:
    proj = make_srp(args.d_in, args.d_out, args.seed)
    proj.save(args.out)
    print(f"wrote projection ({proj.d_in} -> {proj.d_out}) to {args.out}", file=sys.stderr)
    return 0


def _vector_chunks(path: str):
    magic = _sniff_magic(path)
    if magic in (FPB_MAGIC, FPC_MAGIC):
        return iter_fingerprint_vectors(path)
    if magic == EMB_MAGIC:
        return iter_embedding_chunks(path)
    raise FormatError(f"{path}: unrecognized input format {magic!r}")


def cmd_reduce_apply(args) -> int:
    model = load_model(args.model)
    def projected():
        for ids, vecs in _vector_chunks(args.input):
            yield ids, apply_model(model, vecs)
    n = write_embedding_file(args.out, model.d_out, projected())
    print(f"wrote {n} embeddings to {args.out}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# index


def cmd_index_build(args) -> int:
    kdtree_mod.build(
        args.input,
        args.out,
        leaf_capacity=args.leaf_capacity,
        memory_budget=args.memory_budget,
    )
    with KdTree(args.out) as tree:
        print(
            f"indexed {tree.count} points (dim {tree.dim}) into {args.out}",
            file=sys.stderr,
        )
    return 0


def cmd_index_stats(args) -> int:
    with KdTree(args.index) as tree:
        stats = tree.stats()
    _emit_lines(args.out, [f"{key}\t{stats[key]}" for key in stats])
    return 0


def _result_lines(query_ids, all_neighbors):
    for qid, neighbors in zip(query_ids, all_neighbors):
        for rank, nb in enumerate(neighbors, start=1):
            yield f"{qid}\t{rank}\t{nb.id}\t{nb.distance:.6f}"


def cmd_index_query(args) -> int:
    qids, qvecs = read_embedding_file(args.queries)
    if len(qids) == 0:
        raise ValueError(f"{args.queries}: no query records")
    queries = qvecs.astype(np.float64)
    magic = _sniff_magic(args.target)
    if magic == KDT_MAGIC:
        with KdTree(args.target) as tree:
            if args.threads > 1:
                with ThreadPoolExecutor(max_workers=args.threads) as pool:
                    results = list(pool.map(lambda q: tree.knn(q, args.k), queries))
            else:
                results = [tree.knn(q, args.k) for q in queries]
    elif magic == EMB_MAGIC:
        results = bf_knn_multi(iter_embedding_chunks(args.target), queries, args.k)
    else:
        raise FormatError(f"{args.target}: neither an index nor an embedding file")
    _emit_lines(args.out, _result_lines(qids, results))
    return 0


def cmd_index_range(args) -> int:
    lo = np.array([float(v) for v in args.lo.split(",")])
    hi = np.array([float(v) for v in args.hi.split(",")])
    with KdTree(args.index) as tree:
        ids = tree.range_query(lo, hi)
    _emit_lines(args.out, [str(i) for i in ids])
    return 0


# ---------------------------------------------------------------------------
# bench


def cmd_bench_synth(args) -> int:
    data = bench_mod.make_vs_synthetic(
        args.n_active, args.n_decoy, args.dim, args.seed, mode=args.mode
    )
    write_embedding_file(args.out_embeddings, args.dim, [(data.ids, data.coords)])
    labels = (
        f"{ident}\t{'active' if flag else 'decoy'}"
        for ident, flag in zip(data.ids, data.active)
    )
    _emit_lines(args.out_labels, labels)
    return 0


def _read_labels(path: str) -> dict[int, bool]:
    labels: dict[int, bool] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n\r")
            if not line:
                continue
            ident, _, label = line.partition("\t")
            if label == "active":
                flag = True
            elif label == "decoy":
                flag = False
            else:
                raise ValueError(
                    f"{path}:{lineno}: label must be 'active' or 'decoy', got {label!r}"
                )
            labels[int(ident)] = flag
    return labels


def cmd_bench_vs(args) -> int:
    ids, coords = read_embedding_file(args.embeddings)
    labels = _read_labels(args.labels)
    try:
        active = np.array([labels[int(i)] for i in ids], dtype=bool)
    except KeyError as exc:
        raise ValueError(f"{args.labels}: no label for record id {exc.args[0]}")
    active_ids = sorted(int(i) for i in ids[active])
    if not active_ids:
        raise ValueError("no active records in the database")
    rng = random.Random(args.seed)
    rng.shuffle(active_ids)
    n_query = max(1, round(args.query_fraction * len(active_ids)))
    query_ids = set(active_ids[:n_query])
    is_query = np.array([int(i) in query_ids for i in ids], dtype=bool)
    database = bench_mod.LabeledEmbeddings(
        ids=ids[~is_query],
        coords=coords[~is_query].astype(np.float64),
        active=active[~is_query],
    )
    auroc = bench_mod.vs_auroc(database, coords[is_query].astype(np.float64))
    n_active = int(database.active.sum())
    n_decoy = len(database.active) - n_active
    line = (
        f"auroc\t{auroc:.6f}\tactives\t{n_active}\tdecoys\t{n_decoy}"
        f"\tqueries\t{n_query}"
    )
    _emit_lines(args.out, [line])
    return 0


def cmd_bench_timing(args) -> int:
    if args.index is None and args.embeddings is None:
        raise ValueError("need --index and/or --embeddings to time")
    _, queries = read_embedding_file(args.queries)
    queries = queries.astype(np.float64)
    rows = ["method\tn\td\tk\tmean_s\tstd_s"]
    for method, target in (
        ("kdtree", args.index),
        ("bruteforce", args.embeddings),
    ):
        if target is None:
            continue
        report = bench_mod.timing_run(method, target, queries, args.k, args.repeats)
        rows.append(
            f"{report.method}\t{report.n}\t{report.dim}\t{report.k}"
            f"\t{report.mean:.6f}\t{report.std:.6f}"
        )
    _emit_lines(args.out, rows)
    return 0


def _parse_strict(path: str) -> list:
    graphs = []
    for rec in iter_smiles_records(path):
        graphs.append(rec.graph)
    if not graphs:
        raise ValueError(f"{path}: no molecules")
    return graphs


def cmd_bench_ged(args) -> int:
    rejects = []
    database = {}
    for rec in iter_smiles_records(args.database, on_reject=rejects.append):
        database[rec.record_id] = rec.graph
    if rejects:
        print(
            f"note: skipped {len(rejects)} unparseable database line(s)",
            file=sys.stderr,
        )
    query_graphs = _parse_strict(args.queries)
    model = load_model(args.model)
    make = ecfp if args.kind == BINARY else ecfc

    def embed(graph):
        fp = make(graph, radius=args.radius, nbits=args.nbits)
        if args.kind == BINARY:
            vec = np.unpackbits(fp.data, bitorder="little")[: args.nbits]
        else:
            vec = fp.data
        return apply_model(model, vec.astype(np.float64))

    hits = []
    with KdTree(args.index) as tree:
        for graph in query_graphs:
            neighbors = tree.knn(embed(graph), args.k)
            ranked = []
            for nb in neighbors:
                if nb.id not in database:
                    raise ValueError(
                        f"index returned id {nb.id} that is not in {args.database}"
                    )
                ranked.append(database[nb.id])
            hits.append(ranked)
    curve = bench_mod.ged_curve(query_graphs, hits, args.k)
    lines = ["k\tmean_ged"]
    if args.smooth > 1:
        lines[0] += "\tsmoothed"
        for i in range(args.k):
            window = curve[max(0, i - args.smooth + 1) : i + 1]
            lines.append(f"{i + 1}\t{curve[i]:.6f}\t{window.mean():.6f}")
    else:
        lines.extend(f"{i + 1}\t{curve[i]:.6f}" for i in range(args.k))
    _emit_lines(args.out, lines)
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="chemsearch",
        description="Exact chemical similarity search over embedded fingerprints.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fingerprint", help="hash SMILES lines into a fingerprint file")
    p.add_argument("input", help="SMILES file, one molecule per line (optional tab + id)")
    p.add_argument("--out", required=True, help="output fingerprint file")
    p.add_argument("--kind", choices=[BINARY, COUNTS], default=COUNTS)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--nbits", type=int, default=256)
    p.add_argument("--rejects", help="rejects report path (default: OUT.rejects.tsv)")
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("mutate", help="emit random 1-edit mutants of input molecules")
    p.add_argument("input", help="SMILES file")
    p.add_argument("--out", help="output SMILES file (default: stdout)")
    p.add_argument("--count", type=int, default=1, help="mutants per molecule")
    p.add_argument("--steps", type=int, default=1, help="edits per mutant")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--rejects", help="rejects report path (default: OUT.rejects.tsv)")
    p.set_defaults(func=cmd_mutate)

    reduce_p = sub.add_parser("reduce", help="fit and apply dimensionality reductions")
    reduce_sub = reduce_p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = reduce_sub.add_parser("fit-pca", help="fit principal components to fingerprints")
    p.add_argument("input", help="fingerprint file")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--d-out", type=int, default=8)
    p.set_defaults(func=cmd_reduce_fit_pca)

    p = reduce_sub.add_parser("make-srp", help="create a seeded sparse random projection")
    p.add_argument("--d-in", type=int, required=True)
    p.add_argument("--d-out", type=int, default=16)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=cmd_reduce_make_srp)

    p = reduce_sub.add_parser("apply", help="project fingerprints or embeddings")
    p.add_argument("model", help="model file from fit-pca or make-srp")
    p.add_argument("input", help="fingerprint or embedding file")
    p.add_argument("--out", required=True, help="output embedding file")
    p.set_defaults(func=cmd_reduce_apply)

    index_p = sub.add_parser("index", help="build and query the spatial index")
    index_sub = index_p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = index_sub.add_parser("build", help="bulk-load an index from an embedding file")
    p.add_argument("input", help="embedding file")
    p.add_argument("--out", required=True, help="output index file")
    p.add_argument("--leaf-capacity", type=int, default=kdtree_mod.DEFAULT_LEAF_CAPACITY)
    p.add_argument(
        "--memory-budget",
        type=_parse_bytes,
        default=kdtree_mod.DEFAULT_MEMORY_BUDGET,
        help="build memory ceiling, accepts k/m/g suffix (default 512m)",
    )
    p.set_defaults(func=cmd_index_build)

    p = index_sub.add_parser("query", help="k nearest neighbors for a batch of queries")
    p.add_argument(
        "target", help="index file, or an embedding file for a brute-force scan"
    )
    p.add_argument("--queries", required=True, help="embedding file of query points")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="output TSV (default: stdout)")
    p.set_defaults(func=cmd_index_query)

    p = index_sub.add_parser("range", help="ids inside a closed coordinate box")
    p.add_argument("index", help="index file")
    p.add_argument("--lo", required=True, help="comma-separated lower corner")
    p.add_argument("--hi", required=True, help="comma-separated upper corner")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_index_range)

    p = index_sub.add_parser("stats", help="index shape summary")
    p.add_argument("index", help="index file")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_index_stats)

    bench_p = sub.add_parser("bench", help="evaluation harnesses")
    bench_sub = bench_p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = bench_sub.add_parser("ged", help="mean edit distance to top-k hits vs k")
    p.add_argument("--database", required=True, help="SMILES file the index was built from")
    p.add_argument("--queries", required=True, help="SMILES file of query molecules")
    p.add_argument("--model", required=True, help="reduction model file")
    p.add_argument("--index", required=True, help="index over the reduced database")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--kind", choices=[BINARY, COUNTS], default=COUNTS)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--nbits", type=int, default=256)
    p.add_argument("--smooth", type=int, default=0, help="running-average window for plotting")
    p.add_argument("--out", help="output TSV (default: stdout)")
    p.set_defaults(func=cmd_bench_ged)

    p = bench_sub.add_parser("vs", help="virtual-screening AUROC from labelled embeddings")
    p.add_argument("--embeddings", required=True, help="embedding file")
    p.add_argument("--labels", required=True, help="TSV of id<TAB>active|decoy")
    p.add_argument("--query-fraction", type=float, default=0.5,
                   help="fraction of actives held out as queries")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_bench_vs)

    p = bench_sub.add_parser("timing", help="per-query wall time for each method")
    p.add_argument("--index", help="index file (times the kdtree method)")
    p.add_argument("--embeddings", help="embedding file (times the brute-force method)")
    p.add_argument("--queries", required=True, help="embedding file of query points")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", help="output TSV (default: stdout)")
    p.set_defaults(func=cmd_bench_timing)

    p = bench_sub.add_parser("synth", help="generate a synthetic screening dataset")
    p.add_argument("--n-active", type=int, required=True)
    p.add_argument("--n-decoy", type=int, required=True)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--mode", choices=["separable", "shuffled"], default="separable")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-embeddings", required=True)
    p.add_argument("--out-labels", required=True)
    p.set_defaults(func=cmd_bench_synth)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"chemsearch: I/O error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"chemsearch: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
