"""Small deterministic k-means used for codebook training.

k-means++ seeding, a fixed iteration budget, and empty clusters reseeded to
the point farthest from its assigned centroid.  Training subsamples to a
bounded number of points per centroid, the usual practice for quantizer
codebooks.
"""

from __future__ import annotations

import numpy as np

MAX_POINTS_PER_CENTROID = 256


def _plusplus_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = x[first]
    d2 = ((x - centroids[0]) ** 2).sum(1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = x[int(rng.integers(n))]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r))
        idx = min(idx, n - 1)
        centroids[j] = x[idx]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(1))
    return centroids


def kmeans(
    x: np.ndarray,
    k: int,
    iters: int = 25,
    seed: int = 0,
    subsample: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster rows of x into k centroids.

    Returns (centroids float32 (k, d), inertia history float64 (iters+1,)).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < k:
        raise ValueError(f"need at least {k} training points, got {n}")
    rng = np.random.default_rng(seed)
    if subsample and n > k * MAX_POINTS_PER_CENTROID:
        sel = rng.permutation(n)[: k * MAX_POINTS_PER_CENTROID]
        x = x[np.sort(sel)]
        n = x.shape[0]

    centroids = _plusplus_seed(x, k, rng)
    xsq = (x * x).sum(1)
    history = np.empty(iters + 1, dtype=np.float64)
    assign = None
    for it in range(iters + 1):
        d2 = xsq[:, None] + (centroids * centroids).sum(1)[None, :] - 2.0 * (x @ centroids.T)
        assign = d2.argmin(1)
        best = np.maximum(d2[np.arange(n), assign], 0.0)
        history[it] = best.sum()
        if it == iters:
            break
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, x)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        for j in np.flatnonzero(~nonempty):
            far = int(best.argmax())
            centroids[j] = x[far]
            best[far] = 0.0
    return centroids.astype(np.float32), history
