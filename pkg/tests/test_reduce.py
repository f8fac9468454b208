"""PCA and sparse random projection: exactness, determinism, serialization."""

import numpy as np
import pytest
from scipy.spatial.distance import pdist
from scipy.stats import spearmanr

from chemsearch.reduce import (
    PcaModel,
    SparseProjection,
    apply_model,
    load_model,
    make_srp,
    pca_apply,
    pca_fit,
    srp_apply,
)


# -- PCA: hand-checked and batch-vs-stream


def test_two_point_axis():
    x = np.array([[0.0, 0.0], [2.0, 0.0]])
    model = pca_fit(x, 1)
    assert model.mean == pytest.approx([1.0, 0.0])
    assert model.eigenvalues == pytest.approx([2.0])  # (n-1) normalization
    # sign convention: the largest-magnitude entry is positive
    assert np.allclose(model.components, [[1.0, 0.0]])
    assert np.allclose(pca_apply(model, x), [[-1.0], [1.0]])


def test_components_match_direct_eigendecomposition():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(500, 12))
    model = pca_fit(x, 12)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (len(x) - 1)
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    assert model.eigenvalues == pytest.approx(w[order], rel=1e-10)
    for row, direct in zip(model.components, v[:, order].T):
        if direct[np.argmax(np.abs(direct))] < 0:
            direct = -direct
        assert row == pytest.approx(direct, rel=1e-8, abs=1e-10)


def test_chunked_fit_matches_batch_fit():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1000, 16))
    whole = pca_fit(x, 4)
    chunked = pca_fit((x[i : i + 130] for i in range(0, 1000, 130)), 4)
    assert chunked.mean == pytest.approx(whole.mean, rel=1e-12)
    assert chunked.components == pytest.approx(whole.components, rel=1e-9, abs=1e-12)


def test_sign_convention_largest_entry_positive():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(300, 6))
    model = pca_fit(x, 6)
    for row in model.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_subspace_distances_preserved():
    # data confined to an r-dim subspace: PCA-r is an isometry on it
    rng = np.random.default_rng(3)
    basis, _ = np.linalg.qr(rng.normal(size=(64, 5)))
    coeffs = rng.normal(size=(200, 5)) * np.array([5, 4, 3, 2, 1])
    x = coeffs @ basis.T
    model = pca_fit(x, 5)
    projected = pca_apply(model, x)
    orig = pdist(x)
    redu = pdist(projected)
    assert np.allclose(redu, orig, rtol=1e-8, atol=1e-10)


def test_rank_one_data():
    t = np.linspace(-3, 3, 50)[:, None]
    direction = np.array([[0.6, 0.0, -0.8]])
    x = t * direction
    model = pca_fit(x, 1)
    assert abs(model.components[0] @ direction[0]) == pytest.approx(1.0)
    assert np.allclose(pdist(pca_apply(model, x)), pdist(x))


def test_fit_validation():
    x = np.ones((1, 4))
    with pytest.raises(ValueError):
        pca_fit(x, 1)  # fewer than two samples
    x = np.ones((5, 4))
    with pytest.raises(ValueError):
        pca_fit(x, 0)
    with pytest.raises(ValueError):
        pca_fit(x, 5)  # d_out beyond d_in
    bad = np.ones((5, 4))
    bad[2, 1] = np.nan
    with pytest.raises(ValueError):
        pca_fit(bad, 2)


def test_wide_output_warns():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(60, 32))
    with pytest.warns(UserWarning):
        pca_fit(x, 21)


def test_apply_validation():
    model = pca_fit(np.random.default_rng(5).normal(size=(30, 8)), 3)
    with pytest.raises(ValueError):
        pca_apply(model, np.ones(9))
    with pytest.raises(ValueError):
        pca_apply(model, np.full(8, np.nan))


# -- sparse random projection


def test_srp_regenerates_bit_identical():
    a = make_srp(256, 16, seed=99).matrix
    b = make_srp(256, 16, seed=99).matrix
    assert np.array_equal(a, b)
    c = make_srp(256, 16, seed=100).matrix
    assert not np.array_equal(a, c)


def test_srp_entry_distribution():
    proj = make_srp(400, 50, seed=7)
    m = proj.matrix
    s = np.sqrt(400)
    scale = np.sqrt(s / 50)
    values = set(np.unique(m).tolist())
    assert values <= {0.0, scale, -scale}
    density = (m != 0).mean()
    assert density == pytest.approx(1.0 / s, rel=0.25)
    # signs balance approximately
    pos = (m > 0).sum()
    neg = (m < 0).sum()
    assert abs(pos - neg) < 0.25 * (pos + neg)


def test_srp_validation():
    with pytest.raises(ValueError):
        make_srp(0, 4, 1)
    with pytest.raises(ValueError):
        make_srp(16, 32, 1)  # d_out beyond d_in
    with pytest.raises(ValueError):
        make_srp(16, 4, -1)
    with pytest.raises(ValueError):
        srp_apply(make_srp(16, 4, 1), np.ones(15))


def test_srp_preserves_distance_ranks_roughly():
    # data with low intrinsic dimension, where pairwise distances actually
    # vary; isotropic high-dim Gaussians concentrate too tightly for any
    # 16-d sketch to sort them
    rng = np.random.default_rng(8)
    basis, _ = np.linalg.qr(rng.normal(size=(256, 8)))
    x = rng.normal(size=(300, 8)) @ basis.T
    proj = make_srp(256, 16, seed=1)
    y = srp_apply(proj, x)
    rho = spearmanr(pdist(x), pdist(y)).statistic
    assert rho > 0.5


# -- serialization


def test_pca_model_round_trip(tmp_path):
    model = pca_fit(np.random.default_rng(9).normal(size=(100, 10)), 4)
    path = tmp_path / "pca.mdl"
    model.save(path)
    loaded = load_model(path)
    assert isinstance(loaded, PcaModel)
    assert np.array_equal(loaded.mean, model.mean)
    assert np.array_equal(loaded.components, model.components)
    assert np.array_equal(loaded.eigenvalues, model.eigenvalues)


def test_srp_model_round_trip(tmp_path):
    proj = make_srp(128, 16, seed=5)
    path = tmp_path / "srp.mdl"
    proj.save(path)
    loaded = load_model(path)
    assert isinstance(loaded, SparseProjection)
    assert loaded == proj
    assert np.array_equal(loaded.matrix, proj.matrix)


def test_model_file_detects_corruption(tmp_path):
    model = pca_fit(np.random.default_rng(10).normal(size=(50, 6)), 2)
    path = tmp_path / "pca.mdl"
    model.save(path)
    raw = path.read_bytes()
    (tmp_path / "trunc.mdl").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_model(tmp_path / "trunc.mdl")
    (tmp_path / "extra.mdl").write_bytes(raw + b"\x00")
    with pytest.raises(ValueError):
        load_model(tmp_path / "extra.mdl")
    (tmp_path / "magic.mdl").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_model(tmp_path / "magic.mdl")


def test_apply_model_dispatch(tmp_path):
    rng = np.random.default_rng(11)
    x = rng.normal(size=(20, 32))
    pca = pca_fit(x, 4)
    srp = make_srp(32, 4, seed=2)
    assert np.array_equal(apply_model(pca, x), pca_apply(pca, x))
    assert np.array_equal(apply_model(srp, x), srp_apply(srp, x))
