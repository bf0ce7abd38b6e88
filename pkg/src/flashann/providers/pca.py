"""Dimensionality-reduction provider: orthogonal projection onto leading components.

The basis comes from an eigendecomposition of the sample covariance, columns
ordered by descending variance; the retained width is the smallest one whose
cumulative variance fraction reaches the requested level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import VectorDataset
from ..errors import ConfigError
from .base import DistanceProvider


@dataclass
class PCAModel:
    mean: np.ndarray  # (dim,) float64
    basis: np.ndarray  # (dim, dim) float64, columns by descending eigenvalue
    eigvals: np.ndarray  # (dim,) float64, non-increasing
    d: int  # retained components


def pca_train(sample: VectorDataset, alpha: float | None = 0.9,
              d: int | None = None) -> PCAModel:
    """Fit the rotation; keep the smallest d reaching the variance fraction.

    Pass an explicit ``d`` to bypass the variance rule.
    """
    if sample.n < 2:
        raise ConfigError("need at least 2 vectors to fit a covariance")
    x = sample.data.astype(np.float64)
    mean = x.mean(0)
    xc = (sample.data - mean.astype(np.float32)).astype(np.float32)
    cov = (xc.T @ xc).astype(np.float64) / sample.n
    eigvals, vecs = np.linalg.eigh(cov)
    eigvals = np.maximum(eigvals[::-1], 0.0)
    basis = vecs[:, ::-1].copy()
    if d is None:
        if alpha is None or not 0.0 < alpha <= 1.0:
            raise ConfigError("variance fraction must lie in (0, 1]")
        total = eigvals.sum()
        if total <= 0:
            d = 1
        else:
            frac = np.cumsum(eigvals) / total
            d = int(np.searchsorted(frac, alpha - 1e-12) + 1)
            d = min(d, sample.dim)
    if not 1 <= d <= sample.dim:
        raise ConfigError(f"retained dimension {d} out of range")
    return PCAModel(mean=mean, basis=basis, eigvals=eigvals, d=d)


def pca_project(model: PCAModel, vec: np.ndarray, d: int | None = None) -> np.ndarray:
    """Centered projection onto the first d components."""
    d = model.d if d is None else d
    if d > model.basis.shape[1]:
        raise ConfigError(f"d={d} exceeds basis width")
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != model.mean.shape[0]:
        raise ConfigError("vector dimension mismatch")
    return (vec - model.mean) @ model.basis[:, :d]


def pca_project_all(model: PCAModel, data: np.ndarray, d: int | None = None) -> np.ndarray:
    d = model.d if d is None else d
    centered = data.astype(np.float32) - model.mean.astype(np.float32)
    return (centered @ model.basis[:, :d].astype(np.float32)).astype(np.float32)


class PCAProvider(DistanceProvider):
    kind = "pca"

    def __init__(self, model: PCAModel):
        super().__init__()
        self.model = model

    def _build_arrays(self, dataset: VectorDataset) -> dict:
        if dataset.dim != self.model.mean.shape[0]:
            raise ConfigError("dataset dimension does not match the trained model")
        return {
            "vecs": dataset.data,
            "dim": dataset.dim,
            "red": pca_project_all(self.model, dataset.data),
        }

    def encode(self, vec):
        return pca_project(self.model, vec).astype(np.float32)

    def _query_aux_one(self, vec):
        return pca_project(self.model, vec)

    def query_aux(self, queries: np.ndarray) -> np.ndarray:
        return pca_project_all(self.model, queries)

    def exact_frame(self, vec):
        """Full rotation of the centered vector (an isometry on differences)."""
        return pca_project(self.model, vec, d=self.model.basis.shape[1])

    def reconstruct(self, vec):
        full = self.exact_frame(vec)
        out = np.zeros_like(full)
        out[: self.model.d] = full[: self.model.d]
        return out

    def state_dict(self) -> dict:
        return {
            "mean": self.model.mean,
            "basis": self.model.basis,
            "eigvals": self.model.eigvals,
            "d": self.model.d,
        }

    @classmethod
    def from_state(cls, state: dict) -> "PCAProvider":
        return cls(PCAModel(
            mean=state["mean"], basis=state["basis"],
            eigvals=state["eigvals"], d=int(state["d"]),
        ))
