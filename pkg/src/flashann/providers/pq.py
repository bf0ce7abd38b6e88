"""Product-quantization provider: per-subspace codebooks with table-based distances.

Queries get an asymmetric table (query subvector to every centroid) scanned
during candidate acquisition; vertex-to-vertex distances during neighbor
selection come from the precomputed centroid-pair tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import VectorDataset
from ..errors import ConfigError
from ..kmeans import kmeans
from .base import DistanceProvider


def split_dims(dim: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Subspace widths and start offsets; mixes ceil/floor sizes, no padding."""
    if m < 1 or m > dim:
        raise ConfigError(f"subspace count {m} invalid for dimension {dim}")
    base = dim // m
    sizes = np.full(m, base, dtype=np.int32)
    sizes[: dim % m] += 1
    offs = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int32)
    return sizes, offs


@dataclass
class PQModel:
    m: int
    bits: int
    dims: np.ndarray  # (m,) int32 subspace widths
    offs: np.ndarray  # (m,) int32 subspace starts
    cent: np.ndarray  # (m, k, dmax) float32, zero padded past dims[i]
    sdc: np.ndarray  # (m, k, k) float32 centroid-pair squared distances

    @property
    def k(self) -> int:
        return 1 << self.bits


def pq_train(sample: VectorDataset, m: int, bits: int = 8, iters: int = 25,
             seed: int = 0) -> PQModel:
    k = 1 << bits
    if sample.n < k:
        raise ConfigError(f"need at least {k} training vectors, got {sample.n}")
    dims, offs = split_dims(sample.dim, m)
    dmax = int(dims.max())
    cent = np.zeros((m, k, dmax), dtype=np.float32)
    for i in range(m):
        sub = sample.data[:, offs[i] : offs[i] + dims[i]]
        c, _ = kmeans(sub, k, iters=iters, seed=seed + i)
        cent[i, :, : dims[i]] = c
    sdc = np.empty((m, k, k), dtype=np.float32)
    for i in range(m):
        c = cent[i, :, : dims[i]].astype(np.float64)
        d2 = ((c[:, None, :] - c[None, :, :]) ** 2).sum(2)
        sdc[i] = d2.astype(np.float32)
    return PQModel(m=m, bits=bits, dims=dims, offs=offs, cent=cent, sdc=sdc)


def pq_encode(model: PQModel, data: np.ndarray) -> np.ndarray:
    """Nearest-centroid codeword per subspace; (n, m) uint8 (bits <= 8)."""
    data = np.atleast_2d(data)
    out = np.empty((data.shape[0], model.m), dtype=np.uint8)
    for i in range(model.m):
        sub = data[:, model.offs[i] : model.offs[i] + model.dims[i]].astype(np.float64)
        c = model.cent[i, :, : model.dims[i]].astype(np.float64)
        d2 = (sub * sub).sum(1)[:, None] + (c * c).sum(1)[None, :] - 2.0 * (sub @ c.T)
        out[:, i] = d2.argmin(1)
    return out


def pq_decode(model: PQModel, codes: np.ndarray) -> np.ndarray:
    """Concatenated nearest centroids, float64, original dimensionality."""
    codes = np.atleast_2d(codes)
    dim = int(model.dims.sum())
    out = np.empty((codes.shape[0], dim), dtype=np.float64)
    for i in range(model.m):
        out[:, model.offs[i] : model.offs[i] + model.dims[i]] = model.cent[
            i, codes[:, i], : model.dims[i]
        ]
    return out


def pq_adc_table(model: PQModel, query: np.ndarray) -> np.ndarray:
    """Asymmetric table: entry [i][j] = squared distance(query subvector i, centroid j)."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape[0] != int(model.dims.sum()):
        raise ConfigError("query dimension mismatch")
    out = np.empty((model.m, model.k), dtype=np.float64)
    for i in range(model.m):
        sub = query[model.offs[i] : model.offs[i] + model.dims[i]]
        out[i] = ((model.cent[i, :, : model.dims[i]].astype(np.float64) - sub) ** 2).sum(1)
    return out


def pq_sdc_distance(model: PQModel, code_a: np.ndarray, code_b: np.ndarray) -> float:
    """Symmetric distance: sum of precomputed centroid-pair entries."""
    for c in (code_a, code_b):
        if np.any(np.asarray(c) >= model.k):
            raise ConfigError("codeword value out of range")
    return float(
        model.sdc[np.arange(model.m), np.asarray(code_a), np.asarray(code_b)]
        .astype(np.float64)
        .sum()
    )


class PQProvider(DistanceProvider):
    kind = "pq"

    def __init__(self, model: PQModel):
        super().__init__()
        self.model = model

    def _build_arrays(self, dataset: VectorDataset) -> dict:
        if dataset.dim != int(self.model.dims.sum()):
            raise ConfigError("dataset dimension does not match the trained model")
        return {
            "vecs": dataset.data,
            "dim": dataset.dim,
            "codes": pq_encode(self.model, dataset.data),
            "cent": self.model.cent,
            "dims": self.model.dims,
            "offs": self.model.offs,
            "sdc": self.model.sdc,
        }

    def encode(self, vec):
        return pq_encode(self.model, np.asarray(vec))[0]

    def _query_aux_one(self, vec):
        return pq_adc_table(self.model, vec)

    def query_aux(self, queries: np.ndarray) -> np.ndarray:
        out = np.empty((queries.shape[0], self.model.m, self.model.k), dtype=np.float32)
        for qi in range(queries.shape[0]):
            out[qi] = pq_adc_table(self.model, queries[qi])
        return out

    def reconstruct(self, vec):
        return pq_decode(self.model, self.encode(vec))[0]

    def state_dict(self) -> dict:
        return {
            "m": self.model.m,
            "bits": self.model.bits,
            "dims": self.model.dims,
            "offs": self.model.offs,
            "cent": self.model.cent,
            "sdc": self.model.sdc,
        }

    @classmethod
    def from_state(cls, state: dict) -> "PQProvider":
        return cls(PQModel(
            m=int(state["m"]), bits=int(state["bits"]), dims=state["dims"],
            offs=state["offs"], cent=state["cent"], sdc=state["sdc"],
        ))
