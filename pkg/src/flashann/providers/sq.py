"""Scalar-quantization provider: per-dimension affine mapping onto 8-bit integers.

Distances are computed directly on the integer codes, skipping the decode
step; decoding exists only for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import VectorDataset
from ..errors import ConfigError
from .base import DistanceProvider

LEVELS = 255  # 2^8 - 1


@dataclass
class SQModel:
    mins: np.ndarray  # (dim,) float32
    maxs: np.ndarray  # (dim,) float32
    bits: int = 8


def sq_train(sample: VectorDataset, bits: int = 8) -> SQModel:
    if bits != 8:
        raise ConfigError("only 8-bit scalar quantization is supported")
    if sample.n < 1:
        raise ConfigError("cannot train on an empty sample")
    mins = sample.data.min(0)
    maxs = sample.data.max(0)
    if not (maxs > mins).any():
        raise ConfigError("degenerate sample: every dimension is constant")
    return SQModel(mins=mins, maxs=maxs, bits=bits)


def sq_encode(model: SQModel, data: np.ndarray) -> np.ndarray:
    """Round-half-even onto [0, 255], clamping out-of-range values."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    span = (model.maxs - model.mins).astype(np.float64)
    scale = np.where(span > 0, LEVELS / np.where(span > 0, span, 1.0), 0.0)
    q = np.rint((data - model.mins.astype(np.float64)) * scale)
    return np.clip(q, 0, LEVELS).astype(np.uint8)


def sq_decode(model: SQModel, codes: np.ndarray) -> np.ndarray:
    codes = np.atleast_2d(codes).astype(np.float64)
    span = (model.maxs - model.mins).astype(np.float64)
    return model.mins.astype(np.float64) + codes * span / LEVELS


def sq_distance(model: SQModel, code_a: np.ndarray, code_b: np.ndarray) -> int:
    """Ordered integer-domain distance between two codes (no decode)."""
    d = code_a.astype(np.int64) - code_b.astype(np.int64)
    return int((d * d).sum())


class SQProvider(DistanceProvider):
    kind = "sq"

    def __init__(self, model: SQModel):
        super().__init__()
        self.model = model

    def _build_arrays(self, dataset: VectorDataset) -> dict:
        if dataset.dim != self.model.mins.shape[0]:
            raise ConfigError("dataset dimension does not match the trained model")
        if dataset.dim * LEVELS * LEVELS >= 2**31:
            raise ConfigError("dimension too large for 32-bit code distance accumulation")
        return {
            "vecs": dataset.data,
            "dim": dataset.dim,
            "codes": sq_encode(self.model, dataset.data),
        }

    def encode(self, vec):
        return sq_encode(self.model, vec)[0]

    def _query_aux_one(self, vec):
        return self.encode(vec)

    def query_aux(self, queries: np.ndarray) -> np.ndarray:
        return sq_encode(self.model, queries)

    def reconstruct(self, vec):
        return sq_decode(self.model, self.encode(vec))[0]

    def state_dict(self) -> dict:
        return {"mins": self.model.mins, "maxs": self.model.maxs, "bits": self.model.bits}

    @classmethod
    def from_state(cls, state: dict) -> "SQProvider":
        return cls(SQModel(mins=state["mins"], maxs=state["maxs"], bits=int(state["bits"])))
