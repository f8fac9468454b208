"""
From 256-bit fingerprints to a few coordinates
==============================================

Count fingerprints live in 256 dimensions; the index wants 8 or 16.  Two
reducers with different contracts:

* PCA needs a fitting sample but adapts to the data's actual spread.
* A sparse random projection needs no data at all, just (d_in, d_out, seed),
  and its distance distortion follows the usual random-projection bound.

The demo measures how well each preserves pairwise distances on fingerprints
of one molecular family.
"""

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import spearmanr

from chemsearch import apply_model, ecfc, make_srp, parse_smiles, pca_fit, random_mutant

# Build a family of related molecules: an anchor and a cloud of 1-2 edit
# mutants, so the fingerprints cluster around the anchor's bit pattern.
anchor = parse_smiles("CC(=O)Nc1ccc(O)cc1")
graphs = [anchor]
for seed in range(400):
    g = anchor
    for step in range(seed % 2 + 1):
        g = random_mutant(g, seed=seed * 7 + step)
    graphs.append(g)

# duplicates (different seeds, same edit) would put zeros in the distance
# vector; drop them before taking relative errors
vectors = np.unique(
    np.vstack([ecfc(g).data for g in graphs]).astype(np.float64), axis=0
)
print(f"{len(vectors)} distinct fingerprint vectors,"
      f" {vectors.shape[1]} dimensions")

original = pdist(vectors)

# PCA: fit on the sample, keep the leading directions.
for d_out in (4, 8, 16):
    model = pca_fit(iter([vectors]), d_out)
    reduced = apply_model(model, vectors)
    rel = np.abs(pdist(reduced) - original) / original
    rho = spearmanr(original, pdist(reduced)).statistic
    print(f"pca-{d_out:<3d} median rel distance error {np.median(rel):.4f}"
          f"  spearman {rho:.3f}")

# SRP: data-independent, so the quality depends only on d_out and luck of
# the seed.  Regenerating with the same seed gives the same matrix.
for d_out in (4, 8, 16):
    proj = make_srp(256, d_out, seed=1)
    reduced = apply_model(proj, vectors)
    rel = np.abs(pdist(reduced) - original) / original
    rho = spearmanr(original, pdist(reduced)).statistic
    print(f"srp-{d_out:<3d} median rel distance error {np.median(rel):.4f}"
          f"  spearman {rho:.3f}")

same = apply_model(make_srp(256, 8, seed=1), vectors)
again = apply_model(make_srp(256, 8, seed=1), vectors)
other = apply_model(make_srp(256, 8, seed=2), vectors)
print(f"\nsame seed reproduces projections exactly: {np.array_equal(same, again)}")
print(f"different seed differs: {not np.array_equal(same, other)}")
