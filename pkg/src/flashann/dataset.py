"""Dataset containers, vector file I/O, synthetic data, and the exact k-NN oracle.

Vector files use the common little-endian record layout: each record is a
32-bit int dimension followed by that many 32-bit values.  ``.fvecs`` stores
float32 components, ``.ivecs`` stores int32 (used for ground-truth ids).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError


@dataclass
class VectorDataset:
    """Dense row-major float32 matrix; row index doubles as the vector id."""

    data: np.ndarray  # (n, dim) float32, C-contiguous

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ConfigError("dataset must be a 2-D array")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n

    def validate_finite(self) -> None:
        if self.n and not np.isfinite(self.data).all():
            raise FormatError("dataset contains NaN or Inf values")


@dataclass
class GroundTruth:
    """Exact top-k per query: ids and squared distances, ascending, ties by id."""

    k: int
    ids: np.ndarray  # (nq, k) int32
    dists: np.ndarray  # (nq, k) float64, squared


def _read_records(path: str | os.PathLike, dtype) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        return np.zeros((0, 0), dtype=dtype)
    if raw.size < 4:
        raise FormatError(f"{path}: truncated header")
    dim = int(raw[:4].view(np.int32)[0])
    if dim <= 0:
        raise FormatError(f"{path}: invalid record dimension {dim}")
    rec_bytes = 4 * (dim + 1)
    if raw.size % rec_bytes != 0:
        raise FormatError(f"{path}: truncated file (size {raw.size} not a multiple of record size {rec_bytes})")
    table = raw.view(np.int32).reshape(-1, dim + 1)
    if not (table[:, 0] == dim).all():
        raise FormatError(f"{path}: inconsistent record dimensions")
    return table[:, 1:].copy().view(dtype)


def load_fvecs(path: str | os.PathLike) -> VectorDataset:
    """Load a .fvecs file. An empty file yields an empty dataset."""
    vecs = _read_records(path, np.float32)
    ds = VectorDataset(vecs)
    ds.validate_finite()
    return ds


def save_fvecs(dataset: VectorDataset, path: str | os.PathLike) -> None:
    """Write a .fvecs file, bit-exact (load_fvecs inverts it)."""
    n, dim = dataset.n, dataset.dim
    out = np.empty((n, dim + 1), dtype=np.int32)
    out[:, 0] = dim
    out[:, 1:] = dataset.data.view(np.int32)
    out.tofile(path)


def load_ivecs(path: str | os.PathLike) -> np.ndarray:
    """Load a .ivecs file as an (n, dim) int32 array."""
    return _read_records(path, np.int32)


def save_ivecs(arr: np.ndarray, path: str | os.PathLike) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.int32)
    out = np.empty((arr.shape[0], arr.shape[1] + 1), dtype=np.int32)
    out[:, 0] = arr.shape[1]
    out[:, 1:] = arr
    out.tofile(path)


def gen_synthetic(
    n: int,
    dim: int,
    clusters: int,
    seed: int,
    center_spread: float = 3.0,
    return_centers: bool = False,
):
    """Gaussian mixture: ``clusters`` centers drawn N(0, spread^2 I), unit noise.

    Deterministic for a fixed seed.
    """
    if n < 1 or dim < 1 or clusters < 1:
        raise ConfigError("n, dim and clusters must all be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_spread, size=(clusters, dim))
    assign = rng.integers(0, clusters, size=n)
    data = centers[assign] + rng.normal(0.0, 1.0, size=(n, dim))
    ds = VectorDataset(data.astype(np.float32))
    if return_centers:
        return ds, centers.astype(np.float32), assign
    return ds


def _pairwise_sq(queries: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Squared distances (nq, n) in float64 via the expanded inner product."""
    q = queries.astype(np.float64)
    b = base.astype(np.float64)
    d2 = (q * q).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (q @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def brute_force_knn(
    base: VectorDataset, queries: VectorDataset, k: int, block: int = 256
) -> GroundTruth:
    """Exact top-k by squared Euclidean distance; ties broken by ascending id.

    The scan is blocked over queries to bound memory; results are independent
    of the block size.
    """
    if base.dim != queries.dim:
        raise ConfigError(f"dimension mismatch: base {base.dim} vs queries {queries.dim}")
    if k > base.n:
        raise ConfigError(f"k={k} exceeds dataset size {base.n}")
    nq = queries.n
    ids = np.empty((nq, k), dtype=np.int32)
    dists = np.empty((nq, k), dtype=np.float64)
    for lo in range(0, nq, block):
        hi = min(lo + block, nq)
        d2 = _pairwise_sq(queries.data[lo:hi], base.data)
        if k < base.n:
            part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        else:
            part = np.broadcast_to(np.arange(base.n), (hi - lo, base.n))
        pd = np.take_along_axis(d2, part, axis=1)
        order = np.lexsort((part, pd), axis=1)
        ids[lo:hi] = np.take_along_axis(part, order, axis=1)
        dists[lo:hi] = np.take_along_axis(pd, order, axis=1)
    return GroundTruth(k=k, ids=ids, dists=dists)
