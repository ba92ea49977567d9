"""PCA / k-means++ / spectral clustering against independent oracles."""

import itertools

import numpy as np
import pytest

from vlcurate.errors import (
    BadRank,
    DegenerateAffinity,
    DimensionMismatch,
    InfeasibleCapacity,
    TooManyClusters,
)
from vlcurate.numerics import (
    kmeans_pp,
    pairwise_distances,
    pca_fit,
    pca_inverse_transform,
    pca_transform,
    rank_data,
    spearman,
    spectral_cluster,
    spectral_embedding,
)


# -- oracles ---------------------------------------------------------------

def pca_power_oracle(data, m, iters=20000, seed=123):
    """Independent PCA: power iteration with deflation on the covariance."""
    data = np.asarray(data, dtype=float)
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / (len(data) - 1)
    rng = np.random.default_rng(seed)
    comps, variances = [], []
    work = cov.copy()
    for _ in range(m):
        v = rng.normal(size=cov.shape[0])
        v /= np.linalg.norm(v)
        for _ in range(iters):
            nv = work @ v
            norm = np.linalg.norm(nv)
            if norm < 1e-300:
                break
            v = nv / norm
        lam = float(v @ work @ v)
        assert np.linalg.norm(work @ v - lam * v) < 1e-9, "oracle did not converge"
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        comps.append(v)
        variances.append(lam)
        work = work - lam * np.outer(v, v)
    return np.array(comps), np.array(variances)


def exhaustive_wcss_1d(values, k):
    """Global 1-D k-means optimum by enumerating contiguous sorted partitions."""
    values = np.sort(np.asarray(values, dtype=float))
    n = len(values)
    best = np.inf
    for cuts in itertools.combinations(range(1, n), k - 1):
        bounds = (0, *cuts, n)
        total = 0.0
        for a, b in zip(bounds, bounds[1:]):
            seg = values[a:b]
            total += float(((seg - seg.mean()) ** 2).sum())
        best = min(best, total)
    return best


def canonical_labels(labels):
    """Renumber labels by first appearance so partitions compare directly."""
    mapping, out = {}, []
    for lab in labels:
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out.append(mapping[lab])
    return out


# -- PCA -------------------------------------------------------------------

def test_pca_rank_one_data():
    base = np.array([1.0, -2.0, 0.5])
    data = np.outer([0.0, 1.0, 3.0], base)
    model = pca_fit(data, 1)
    total = ((data - data.mean(0)) ** 2).sum() / (len(data) - 1)
    assert model.explained_variance[0] == pytest.approx(total, rel=1e-12)


def test_pca_full_rank_roundtrip():
    rng = np.random.default_rng(5)
    data = rng.normal(size=(5, 3))
    model = pca_fit(data, 3)
    back = pca_inverse_transform(model, pca_transform(model, data))
    assert np.abs(back - data).max() < 1e-9


def test_pca_matches_power_iteration_oracle():
    rng = np.random.default_rng(42)
    data = rng.normal(size=(20, 8))
    model = pca_fit(data, 6)
    comps, variances = pca_power_oracle(data, 6)
    assert np.abs(model.components - comps).max() < 1e-8
    assert np.abs(model.explained_variance - variances).max() < 1e-8


def test_pca_transform_of_mean_is_zero():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(10, 4))
    model = pca_fit(data, 3)
    assert np.abs(pca_transform(model, model.mean[None, :])).max() < 1e-12


def test_pca_transformed_variances_match():
    rng = np.random.default_rng(2)
    data = rng.normal(size=(30, 7))
    model = pca_fit(data, 5)
    reduced = pca_transform(model, data)
    col_var = reduced.var(axis=0, ddof=1)
    assert np.abs(col_var - model.explained_variance).max() < 1e-8


def test_pca_m6_width():
    rng = np.random.default_rng(3)
    reduced = pca_transform(pca_fit(rng.normal(size=(40, 12)), 6),
                            rng.normal(size=(9, 12)))
    assert reduced.shape == (9, 6)


def test_pca_rank_deficient_trailing_zeros():
    rng = np.random.default_rng(4)
    thin = rng.normal(size=(12, 2)) @ rng.normal(size=(2, 5))  # rank 2 in 5-D
    model = pca_fit(thin, 4)
    assert model.explained_variance[2] == pytest.approx(0.0, abs=1e-10)
    assert model.explained_variance[3] == pytest.approx(0.0, abs=1e-10)
    assert (model.explained_variance >= -1e-12).all()


@pytest.mark.parametrize("seed", range(5))
def test_pca_components_orthonormal(seed):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(25, 9))
    model = pca_fit(data, 6)
    gram = model.components @ model.components.T
    assert np.abs(gram - np.eye(6)).max() < 1e-8
    diffs = np.diff(model.explained_variance)
    assert (diffs <= 1e-12).all()
    total_data = ((data - data.mean(0)) ** 2).sum() / (len(data) - 1)
    assert model.explained_variance.sum() <= total_data + 1e-8


def test_pca_sign_convention():
    rng = np.random.default_rng(8)
    data = rng.normal(size=(15, 6))
    model = pca_fit(data, 4)
    for row in model.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_pca_deterministic():
    rng = np.random.default_rng(9)
    data = rng.normal(size=(18, 5))
    m1, m2 = pca_fit(data, 3), pca_fit(data, 3)
    assert np.array_equal(m1.components, m2.components)
    assert np.array_equal(m1.explained_variance, m2.explained_variance)


def test_pca_bad_rank():
    data = np.random.default_rng(0).normal(size=(6, 4))
    with pytest.raises(BadRank):
        pca_fit(data, 0)
    with pytest.raises(BadRank):
        pca_fit(data, 5)  # > min(N-1, d) = 4
    with pytest.raises(BadRank):
        pca_fit(data[:1], 1)


def test_pca_transform_dim_mismatch():
    data = np.random.default_rng(0).normal(size=(6, 4))
    model = pca_fit(data, 2)
    with pytest.raises(DimensionMismatch):
        pca_transform(model, np.ones((3, 5)))


# -- k-means++ ---------------------------------------------------------------

def test_kmeans_two_pairs():
    data = np.array([[0.0], [0.1], [10.0], [10.1]])
    got = kmeans_pp(data, 2, seed=0)
    assert canonical_labels(got.labels) == [0, 0, 1, 1]
    assert sorted(got.sizes) == [2, 2]


@pytest.mark.parametrize("seed", range(8))
def test_kmeans_matches_exhaustive_1d_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 9))
    k = int(rng.integers(1, 4))
    values = rng.uniform(-5, 5, size=n)
    got = kmeans_pp(values[:, None], k, seed=0)
    assert got.inertia == pytest.approx(exhaustive_wcss_1d(values, k), abs=1e-9)


def test_kmeans_k_equals_n():
    rng = np.random.default_rng(2)
    data = rng.normal(size=(6, 3))
    got = kmeans_pp(data, 6, seed=0)
    assert got.inertia == pytest.approx(0.0, abs=1e-12)
    assert sorted(got.labels) == list(range(6))


def test_kmeans_too_many_clusters():
    with pytest.raises(TooManyClusters):
        kmeans_pp(np.ones((3, 2)), 4, seed=0)


def test_kmeans_inertia_history_nonincreasing():
    rng = np.random.default_rng(7)
    data = rng.normal(size=(200, 5))
    got = kmeans_pp(data, 8, seed=3)
    hist = got.inertia_history
    assert len(hist) >= 1
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


def test_kmeans_seed_determinism():
    rng = np.random.default_rng(11)
    data = rng.normal(size=(80, 4))
    a = kmeans_pp(data, 5, seed=21)
    b = kmeans_pp(data, 5, seed=21)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_no_empty_cluster_on_duplicates():
    data = np.zeros((10, 2))
    got = kmeans_pp(data, 2, seed=0)
    assert (got.sizes >= 1).all()
    assert set(got.labels) == {0, 1}


def test_kmeans_balanced_exact_capacity():
    rng = np.random.default_rng(13)
    data = np.vstack([rng.normal(0, 0.2, size=(7, 2)),
                      rng.normal(5, 0.2, size=(3, 2))])
    got = kmeans_pp(data, 2, seed=0, balanced=True, capacity=5)
    assert sorted(got.sizes) == [5, 5]
    assert (got.labels >= 0).all()


def test_kmeans_balanced_leftovers():
    rng = np.random.default_rng(14)
    data = rng.normal(size=(7, 2))
    got = kmeans_pp(data, 2, seed=0, balanced=True, capacity=3)
    assert list(got.sizes) == [3, 3]
    assert int((got.labels == -1).sum()) == 1


def test_kmeans_balanced_medium_scale():
    rng = np.random.default_rng(15)
    data = rng.normal(size=(200, 6))
    got = kmeans_pp(data, 6, seed=1, balanced=True, capacity=33)
    assert (got.sizes == 33).all()
    assert int((got.labels == -1).sum()) == 200 - 6 * 33


def test_kmeans_infeasible_capacity():
    with pytest.raises(InfeasibleCapacity):
        kmeans_pp(np.ones((5, 2)), 2, seed=0, balanced=True, capacity=3)


def test_kmeans_balanced_default_capacity():
    rng = np.random.default_rng(16)
    data = rng.normal(size=(23, 3))
    got = kmeans_pp(data, 4, seed=0, balanced=True)  # capacity = 23 // 4 = 5
    assert (got.sizes == 5).all()
    assert int((got.labels == -1).sum()) == 3


# -- spectral clustering -----------------------------------------------------

def _two_groups(seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 0.3, size=(30, 3))
    b = rng.normal(0.0, 0.3, size=(10, 3)) + 40.0
    truth = np.array([0] * 30 + [1] * 10)
    return np.vstack([a, b]), truth


def _three_blobs(seed=1):
    rng = np.random.default_rng(seed)
    blobs = [rng.normal(0.0, 0.4, size=(48, 2)),
             rng.normal(0.0, 0.4, size=(8, 2)) + [15.0, 0.0],
             rng.normal(0.0, 0.4, size=(8, 2)) + [0.0, 15.0]]
    truth = np.array([0] * 48 + [1] * 8 + [2] * 8)
    return np.vstack(blobs), truth


def test_spectral_two_disconnected_components():
    data, truth = _two_groups()
    got = spectral_cluster(data, 2, seed=0)
    assert canonical_labels(got.labels) == canonical_labels(truth)


def test_spectral_k1():
    data, _ = _two_groups(3)
    got = spectral_cluster(data, 1, seed=0)
    assert set(got.labels) == {0}


def test_spectral_three_blobs_full_agreement():
    data, truth = _three_blobs()
    got = spectral_cluster(data, 3, seed=0)
    assert canonical_labels(got.labels) == canonical_labels(truth)


def test_spectral_eigenvalue_range_and_row_norms():
    data, _ = _three_blobs(5)
    eigvals, rows = spectral_embedding(data, 3)
    assert eigvals.min() >= -1e-8
    assert eigvals.max() <= 2.0 + 1e-8
    assert np.abs(np.linalg.norm(rows, axis=1) - 1.0).max() < 1e-8


def test_spectral_degenerate_affinity():
    with pytest.raises(DegenerateAffinity):
        spectral_cluster(np.ones((8, 2)), 2, seed=0)


def test_spectral_too_many_clusters():
    with pytest.raises(TooManyClusters):
        spectral_cluster(np.random.default_rng(0).normal(size=(4, 2)), 5, seed=0)


def test_pairwise_distances_basic():
    data = np.array([[0.0, 0.0], [3.0, 4.0]])
    dist = pairwise_distances(data)
    assert dist[0, 1] == pytest.approx(5.0, abs=1e-12)
    assert dist[0, 0] == 0.0


# -- rank helpers -------------------------------------------------------------

def test_rank_data_tie_averaging():
    assert list(rank_data(np.array([10.0, 20.0, 20.0, 30.0]))) == [1.0, 2.5, 2.5, 4.0]


def test_spearman_endpoints():
    x = np.arange(10.0)
    assert spearman(x, x ** 3) == pytest.approx(1.0)
    assert spearman(x, -x) == pytest.approx(-1.0)
    assert spearman(x, np.ones(10)) == 0.0


def test_spearman_matches_textbook_formula():
    rng = np.random.default_rng(17)
    x = rng.permutation(50).astype(float)
    y = rng.permutation(50).astype(float)
    d = rank_data(x) - rank_data(y)
    expected = 1.0 - 6.0 * float((d * d).sum()) / (50 * (50 ** 2 - 1))
    assert spearman(x, y) == pytest.approx(expected, abs=1e-12)
