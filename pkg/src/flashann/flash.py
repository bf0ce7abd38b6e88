"""Register-width compact coding for graph construction.

Pipeline: project vectors onto leading principal components, split the
projection into subspaces of 16-centroid codebooks (4-bit codewords), and
quantize all table distances onto a shared 8-bit grid so that one subspace's
query table occupies exactly 128 bits.  Per-insertion asymmetric tables (ADT)
serve candidate acquisition via batched byte-shuffle lookups over the vertex
blocks; a global symmetric table (SDT) of centroid-pair distances serves
neighbor selection.  Both tables share the same quantization range, so their
outputs are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _pycore
from .dataset import VectorDataset
from .errors import ConfigError
from .kmeans import kmeans
from .providers.base import DistanceProvider
from .providers.pca import PCAModel, pca_project, pca_project_all, pca_train
from .providers.pq import split_dims

K = 16  # centroids per subspace (4-bit codewords)
H_BITS = 8  # bits per quantized distance
QMAX = 255  # 2^H - 1


@dataclass
class FlashModel:
    pca: PCAModel  # rotation; d = retained projection width
    m: int  # subspace count
    dims: np.ndarray  # (m,) int32 subspace widths over the projection
    offs: np.ndarray  # (m,) int32 subspace starts
    cent: np.ndarray  # (m, K, dmax) float32 codebooks, zero padded
    sdt: np.ndarray  # (m, K, K) uint8 quantized centroid-pair distances
    dist_min: float
    dist_max: float

    @property
    def delta(self) -> float:
        return self.dist_max - self.dist_min

    @property
    def d(self) -> int:
        return self.pca.d


def quantize_distance(model: FlashModel, dist) -> np.ndarray:
    """8-bit grid mapping: 0 at dist_min, 255 at dist_max, monotone between."""
    if model.delta <= 0:
        raise ConfigError("degenerate quantization range")
    return _pycore.quantize_distance(dist, model.dist_min, model.delta)


def dequantize_distance(model: FlashModel, q) -> np.ndarray:
    return model.dist_min + np.asarray(q, dtype=np.float64) * model.delta / QMAX


def flash_train(sample: VectorDataset, d_f: int, m_f: int, seed: int = 0,
                kmeans_iters: int = 25) -> FlashModel:
    """Fit rotation, codebooks, quantization range, and the symmetric table.

    The shared range takes each subspace's distance extremes from both the
    centroid-pair distances and the sample-to-centroid distances, summing the
    per-subspace maxima and taking the smallest per-subspace minimum.
    """
    if sample.n < 10 * K:
        raise ConfigError(f"need at least {10 * K} training vectors, got {sample.n}")
    if not 1 <= d_f <= sample.dim:
        raise ConfigError(f"d_f={d_f} out of range for dimension {sample.dim}")
    if m_f > d_f:
        raise ConfigError(f"m_f={m_f} exceeds projection width {d_f}")
    pca = pca_train(sample, d=d_f)
    reduced = pca_project_all(pca, sample.data)
    dims, offs = split_dims(d_f, m_f)
    dmax = int(dims.max())
    cent = np.zeros((m_f, K, dmax), dtype=np.float32)
    sub_min = np.empty(m_f)
    sub_max = np.empty(m_f)
    raw_sdt = np.empty((m_f, K, K), dtype=np.float64)
    for i in range(m_f):
        sub = reduced[:, offs[i] : offs[i] + dims[i]]
        c, _ = kmeans(sub, K, iters=kmeans_iters, seed=seed + i)
        cent[i, :, : dims[i]] = c
        c64 = c.astype(np.float64)
        pair = ((c64[:, None, :] - c64[None, :, :]) ** 2).sum(2)
        raw_sdt[i] = pair
        s64 = sub.astype(np.float64)
        x2 = (s64 * s64).sum(1)[:, None] + (c64 * c64).sum(1)[None, :] - 2.0 * (s64 @ c64.T)
        np.maximum(x2, 0.0, out=x2)
        sub_min[i] = min(pair.min(), x2.min())
        sub_max[i] = max(pair.max(), x2.max())
    dist_min = float(sub_min.min())
    dist_max = float(sub_max.sum())
    if dist_max <= dist_min:
        raise ConfigError("degenerate sample: zero distance spread")
    model = FlashModel(
        pca=pca, m=m_f, dims=dims, offs=offs, cent=cent,
        sdt=np.zeros((m_f, K, K), dtype=np.uint8),
        dist_min=dist_min, dist_max=dist_max,
    )
    model.sdt = quantize_distance(model, raw_sdt)
    return model


def encode_and_adt(model: FlashModel, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Codewords and quantized query table from one pass of centroid distances."""
    reduced = pca_project(model.pca, vec)
    return _pycore.flash_encode_adt(
        model.cent, model.dims, model.offs, model.dist_min, model.delta, reduced
    )


def sdt_distance(model: FlashModel, code_a: np.ndarray, code_b: np.ndarray) -> int:
    """Saturating sum of symmetric-table entries; comparable with ADT sums."""
    for c in (code_a, code_b):
        if np.any(np.asarray(c) >= K):
            raise ConfigError("codeword value out of range")
    return _pycore.flash_sdt_distance(model.sdt, np.asarray(code_a), np.asarray(code_b))


def saturation_rate(model: FlashModel, codes: np.ndarray, sample_pairs: int = 10000,
                    seed: int = 0) -> float:
    """Fraction of sampled code pairs whose symmetric sum would exceed the 8-bit
    range (diagnostic: should be rare on a well-trained range)."""
    rng = np.random.default_rng(seed)
    n = codes.shape[0]
    a = rng.integers(0, n, sample_pairs)
    b = rng.integers(0, n, sample_pairs)
    sdt16 = model.sdt.astype(np.uint32)
    tot = np.zeros(sample_pairs, dtype=np.uint32)
    for i in range(model.m):
        tot += sdt16[i, codes[a, i], codes[b, i]]
    return float((tot > QMAX).mean())


class FlashProvider(DistanceProvider):
    kind = "flash"

    def __init__(self, model: FlashModel):
        super().__init__()
        self.model = model

    @property
    def code_subspaces(self) -> int:
        return self.model.m

    def _build_arrays(self, dataset: VectorDataset) -> dict:
        if dataset.dim != self.model.pca.mean.shape[0]:
            raise ConfigError("dataset dimension does not match the trained model")
        proj = pca_project_all(self.model.pca, dataset.data)
        codes = self._encode_rows(proj)
        return {
            "vecs": dataset.data,
            "dim": dataset.dim,
            "proj": proj,
            "codes": codes,
            "cent": self.model.cent,
            "dims": self.model.dims,
            "offs": self.model.offs,
            "sdt": self.model.sdt,
            "dist_min": self.model.dist_min,
            "delta": self.model.delta,
        }

    def _encode_rows(self, proj: np.ndarray) -> np.ndarray:
        m = self.model.m
        out = np.empty((proj.shape[0], m), dtype=np.uint8)
        for i in range(m):
            sub = proj[:, self.model.offs[i] : self.model.offs[i] + self.model.dims[i]].astype(np.float64)
            c = self.model.cent[i, :, : self.model.dims[i]].astype(np.float64)
            d2 = (sub * sub).sum(1)[:, None] + (c * c).sum(1)[None, :] - 2.0 * (sub @ c.T)
            out[:, i] = d2.argmin(1)
        return out

    def encode(self, vec):
        code, _ = encode_and_adt(self.model, vec)
        return code

    def _query_aux_one(self, vec):
        return pca_project(self.model.pca, vec)

    def query_aux(self, queries: np.ndarray) -> np.ndarray:
        return pca_project_all(self.model.pca, queries)

    def exact_frame(self, vec):
        return pca_project(self.model.pca, vec, d=self.model.pca.basis.shape[1])

    def reconstruct(self, vec):
        """Zero-padded concatenation of the chosen centroids in the rotated frame."""
        full = self.exact_frame(vec)
        out = np.zeros_like(full)
        code = self.encode(vec)
        for i in range(self.model.m):
            out[self.model.offs[i] : self.model.offs[i] + self.model.dims[i]] = self.model.cent[
                i, code[i], : self.model.dims[i]
            ]
        return out

    def state_dict(self) -> dict:
        return {
            "mean": self.model.pca.mean,
            "basis": self.model.pca.basis,
            "eigvals": self.model.pca.eigvals,
            "d": self.model.pca.d,
            "m": self.model.m,
            "dims": self.model.dims,
            "offs": self.model.offs,
            "cent": self.model.cent,
            "sdt": self.model.sdt,
            "dist_min": self.model.dist_min,
            "dist_max": self.model.dist_max,
        }

    @classmethod
    def from_state(cls, state: dict) -> "FlashProvider":
        pca = PCAModel(mean=state["mean"], basis=state["basis"],
                       eigvals=state["eigvals"], d=int(state["d"]))
        return cls(FlashModel(
            pca=pca, m=int(state["m"]), dims=state["dims"], offs=state["offs"],
            cent=state["cent"], sdt=state["sdt"],
            dist_min=float(state["dist_min"]), dist_max=float(state["dist_max"]),
        ))
