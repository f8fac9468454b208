"""Exact chemical similarity search over embedded fingerprints.

The pipeline: parse SMILES into molecular graphs, hash circular
substructures into fingerprints, project those to a few dimensions (PCA or
a seeded sparse random projection), bulk-load the vectors into a
disk-backed k-d tree, and answer k-NN and range queries exactly.  A linear
scan, an approximate graph edit distance, and screening/timing harnesses
round out the evaluation side.
"""

from .bench import (
    LabeledEmbeddings,
    TimingReport,
    ged_curve,
    make_vs_synthetic,
    timing_run,
    vs_auroc,
)
from .bruteforce import (
    Neighbor,
    bf_knn,
    bf_knn_multi,
    euclidean_distance,
    squared_distances,
)
from .fingerprint import BINARY, COUNTS, Fingerprint, ecfc, ecfp, tanimoto_distance
from .formats import (
    FormatError,
    atomic_write,
    iter_embedding_chunks,
    iter_fingerprint_chunks,
    iter_smiles_records,
    read_embedding_file,
    read_fingerprint_file,
    write_embedding_file,
    write_fingerprint_file,
)
from .ged import approx_ged, assignment_solve, exact_ged_tiny
from .kdtree import KdTree
from .kdtree import build as build_index
from .molgraph import (
    AROMATIC,
    DOUBLE,
    SINGLE,
    TRIPLE,
    Atom,
    Bond,
    MolecularGraph,
    MutationError,
    SmilesError,
    UnsupportedFeatureError,
    cycle_count,
    mutate_addition,
    mutate_deletion,
    mutate_substitution,
    parse_smiles,
    random_mutant,
    write_smiles,
)
from .reduce import (
    PcaModel,
    SparseProjection,
    apply_model,
    load_model,
    make_srp,
    pca_apply,
    pca_fit,
    srp_apply,
)

__version__ = "0.1.0"
