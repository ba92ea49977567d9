"""Deterministic numerical engines: PCA, k-means++, spectral clustering.

Everything is seeded and pure: identical (data, seed) always reproduces
identical output. The symmetric eigenproblems (PCA covariance, graph
Laplacian) go through ``np.linalg.eigh``; tests cross-check the results
against independent brute-force routes.

Balanced k-means adds a capacity post-pass on top of standard Lloyd:
each oversized cluster keeps its ``capacity`` closest members, evicted
points refill under-capacity clusters closest-first, and the final
``N - k * capacity`` leftovers carry label -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadRank,
    DegenerateAffinity,
    DimensionMismatch,
    InfeasibleCapacity,
    TooManyClusters,
)

LLOYD_MAX_ITER = 300
DEFAULT_RESTARTS = 10


# -- PCA -----------------------------------------------------------------

@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray                # (d,)
    components: np.ndarray          # (m, d), orthonormal rows
    explained_variance: np.ndarray  # (m,), nonincreasing


def pca_fit(data: np.ndarray, m: int) -> PcaModel:
    """Top-m eigenvectors of the sample covariance of mean-centered data.

    Sign convention: each component's largest-magnitude entry is positive.
    Rank deficiency below m is not an error; trailing variances are zero.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {data.shape}")
    n, d = data.shape
    if n < 2:
        raise BadRank("need at least 2 rows to fit")
    if not 1 <= m <= min(n - 1, d):
        raise BadRank(f"target dim {m} outside [1, {min(n - 1, d)}]")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")[:m]
    variance = np.maximum(eigvals[order], 0.0)
    components = eigvecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=components, explained_variance=variance)


def pca_transform(model: PcaModel, data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.shape[-1] != model.mean.shape[0]:
        raise DimensionMismatch(
            f"data dim {data.shape[-1]} does not match model dim {model.mean.shape[0]}"
        )
    return (data - model.mean) @ model.components.T


def pca_inverse_transform(model: PcaModel, reduced: np.ndarray) -> np.ndarray:
    reduced = np.asarray(reduced, dtype=float)
    return reduced @ model.components + model.mean


# -- k-means++ -----------------------------------------------------------

@dataclass
class ClusterAssignment:
    labels: np.ndarray              # (N,) ints in [0, k) or -1 for leftovers
    centroids: np.ndarray | None    # (k, d) for k-means, None for spectral
    sizes: np.ndarray               # (k,) member counts over labels >= 0
    inertia: float | None = None
    inertia_history: list[float] | None = None


def _squared_distances(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (
        (data * data).sum(axis=1)[:, None]
        - 2.0 * data @ centroids.T
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _dsq_seed(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]), dtype=float)
    centroids[0] = data[int(rng.integers(n))]
    closest = ((data - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        centroids[j] = data[idx]
        closest = np.minimum(closest, ((data - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(
    data: np.ndarray, centroids: np.ndarray, max_iter: int
) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    n, k = data.shape[0], centroids.shape[0]
    centroids = centroids.copy()
    labels = np.full(n, -1, dtype=int)
    history: list[float] = []
    for _ in range(max_iter):
        d2 = _squared_distances(data, centroids)
        new_labels = d2.argmin(axis=1)
        # re-seed empty clusters from the farthest points (lowest cluster
        # index claims the farthest, the next empty one the runner-up, ...)
        point_d2 = d2[np.arange(n), new_labels]
        counts = np.bincount(new_labels, minlength=k)
        taken: set[int] = set()
        for j in np.flatnonzero(counts == 0):
            candidates = [
                (-point_d2[i], i) for i in range(n) if i not in taken and counts[new_labels[i]] > 1
            ]
            neg_d, far = min(candidates)
            counts[new_labels[far]] -= 1
            new_labels[far] = j
            counts[j] = 1
            centroids[j] = data[far]
            point_d2[far] = 0.0
            taken.add(far)
        history.append(float(point_d2.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            centroids[j] = data[labels == j].mean(axis=0)
    d2 = _squared_distances(data, centroids)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, centroids, inertia, history


def _enforce_capacity(
    data: np.ndarray, labels: np.ndarray, centroids: np.ndarray, capacity: int
) -> np.ndarray:
    k = centroids.shape[0]
    labels = labels.copy()
    d2 = _squared_distances(data, centroids)
    pool: list[int] = []
    for j in range(k):
        members = np.flatnonzero(labels == j)
        if len(members) > capacity:
            order = members[np.argsort(d2[members, j], kind="stable")]
            evicted = order[capacity:]
            labels[evicted] = -1
            pool.extend(int(i) for i in evicted)
    space = capacity - np.bincount(labels[labels >= 0], minlength=k)
    if pool:
        edges = sorted(
            (float(d2[i, j]), i, j) for i in pool for j in range(k) if space[j] > 0
        )
        assigned: set[int] = set()
        for _, i, j in edges:
            if i in assigned or space[j] <= 0:
                continue
            labels[i] = j
            space[j] -= 1
            assigned.add(i)
    return labels


def kmeans_pp(
    data: np.ndarray,
    k: int,
    seed: int,
    balanced: bool = False,
    capacity: int | None = None,
    n_init: int = DEFAULT_RESTARTS,
    max_iter: int = LLOYD_MAX_ITER,
    init_centroids: np.ndarray | None = None,
) -> ClusterAssignment:
    """D^2-sampled seeding plus Lloyd iterations; best of ``n_init`` restarts.

    With ``balanced=True`` the capacity post-pass makes every cluster hold
    exactly ``capacity`` members (default N // k); leftovers get label -1.
    ``init_centroids`` skips seeding and restarts (single run), mainly for
    driving Lloyd into specific configurations in tests.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {data.shape}")
    n = data.shape[0]
    if k > n:
        raise TooManyClusters(f"k={k} exceeds {n} rows")
    if k < 1:
        raise TooManyClusters("k must be >= 1")
    if balanced:
        if capacity is None:
            capacity = n // k
        if capacity < 1 or capacity * k > n:
            raise InfeasibleCapacity(f"capacity {capacity} x {k} clusters > {n} rows")

    rng = np.random.default_rng(seed)
    best: tuple[np.ndarray, np.ndarray, float, list[float]] | None = None
    runs = 1 if init_centroids is not None else max(1, n_init)
    for _ in range(runs):
        if init_centroids is not None:
            start = np.asarray(init_centroids, dtype=float)
        else:
            start = _dsq_seed(data, k, rng)
        result = _lloyd(data, start, max_iter)
        if best is None or result[2] < best[2]:
            best = result
    labels, centroids, inertia, history = best

    if balanced:
        labels = _enforce_capacity(data, labels, centroids, capacity)
    sizes = np.bincount(labels[labels >= 0], minlength=k)
    return ClusterAssignment(
        labels=labels,
        centroids=centroids,
        sizes=sizes,
        inertia=inertia,
        inertia_history=history,
    )


# -- spectral clustering -------------------------------------------------

def pairwise_distances(data: np.ndarray) -> np.ndarray:
    d2 = _squared_distances(data, data)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def spectral_embedding(data: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of the normalized Laplacian plus the row-normalized
    matrix of its k smallest-eigenvalue eigenvectors."""
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    dist = pairwise_distances(data)
    off_diag = dist[~np.eye(n, dtype=bool)]
    sigma = float(np.median(off_diag)) if off_diag.size else 0.0
    if sigma == 0.0:
        raise DegenerateAffinity("median pairwise distance is zero")
    affinity = np.exp(-(dist * dist) / (2.0 * sigma * sigma))
    np.fill_diagonal(affinity, 0.0)
    degree = affinity.sum(axis=1)
    inv_sqrt = np.where(degree > 0.0, 1.0 / np.sqrt(np.where(degree > 0.0, degree, 1.0)), 0.0)
    lap = np.eye(n) - (inv_sqrt[:, None] * affinity) * inv_sqrt[None, :]
    lap = (lap + lap.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(lap)
    rows = eigvecs[:, :k].copy()
    norms = np.linalg.norm(rows, axis=1)
    nonzero = norms > 0.0
    rows[nonzero] /= norms[nonzero, None]
    return eigvals, rows


def rank_data(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties averaged."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=float)
    sorted_vals = values[order]
    positions = np.arange(1.0, values.size + 1.0)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = positions[i:j + 1].mean()
        i = j + 1
    return ranks


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman rank correlation (Pearson on tie-averaged ranks)."""
    ra = rank_data(a) - (np.asarray(a).size + 1.0) / 2.0
    rb = rank_data(b) - (np.asarray(b).size + 1.0) / 2.0
    denom = math.sqrt(float((ra * ra).sum()) * float((rb * rb).sum()))
    if denom == 0.0:
        return 0.0
    return float((ra * rb).sum() / denom)


def spectral_cluster(data: np.ndarray, k: int, seed: int) -> ClusterAssignment:
    """Gaussian-affinity normalized-cut clustering (median-distance kernel width)."""
    data = np.asarray(data, dtype=float)
    if k > data.shape[0]:
        raise TooManyClusters(f"k={k} exceeds {data.shape[0]} rows")
    _, rows = spectral_embedding(data, k)
    assignment = kmeans_pp(rows, k, seed)
    return ClusterAssignment(
        labels=assignment.labels,
        centroids=None,
        sizes=assignment.sizes,
        inertia=assignment.inertia,
    )
