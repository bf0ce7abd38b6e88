"""Distance-provider interface shared by every coding strategy.

A provider owns whatever trained model and per-vector codes a strategy needs
and answers two kinds of ordered, non-negative distance queries: asymmetric
(prepared query context vs. a stored vertex) and symmetric (two stored
vertices).  Distances are squared Euclidean or an order-compatible surrogate;
only comparisons matter to the graph builder.  Original vectors stay
reachable for reranking.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import _pycore
from ..dataset import VectorDataset
from ..errors import ConfigError

KIND_IDS = {
    "exact": _pycore.KIND_EXACT,
    "pq": _pycore.KIND_PQ,
    "sq": _pycore.KIND_SQ,
    "pca": _pycore.KIND_PCA,
    "flash": _pycore.KIND_FLASH,
}


@dataclass
class QueryContext:
    """Per-query (or per-inserted-vector) prepared state."""

    vec: np.ndarray
    payload: dict[str, Any] = field(default_factory=dict)


class DistanceProvider(ABC):
    """Strategy-specific encoding plus distance evaluation over one dataset."""

    kind: str = ""

    def __init__(self):
        self.dataset: VectorDataset | None = None
        self._prov: dict | None = None
        self._dist: _pycore._Dist | None = None

    @property
    def kind_id(self) -> int:
        return KIND_IDS[self.kind]

    @property
    def code_subspaces(self) -> int:
        """Bytes of codeword payload per neighbor in vertex blocks (0 = none)."""
        return 0

    # -- wiring

    def attach(self, dataset: VectorDataset) -> None:
        """Bind a dataset and bulk-encode it."""
        self.dataset = dataset
        self._prov = self._build_arrays(dataset)
        self._dist = _pycore._Dist(self.kind_id, self._prov)

    @abstractmethod
    def _build_arrays(self, dataset: VectorDataset) -> dict:
        """Produce the flat array dict consumed by the compute cores."""

    def core_arrays(self) -> dict:
        if self._prov is None:
            raise ConfigError("provider not attached to a dataset")
        return self._prov

    # -- per-vector operations

    @abstractmethod
    def encode(self, vec: np.ndarray):
        """Compact code of one vector."""

    def make_query_ctx(self, vec: np.ndarray) -> QueryContext:
        vec = np.asarray(vec, dtype=np.float64)
        aux = self._query_aux_one(vec)
        ctx = self._dist.make_ctx(vec, aux)
        return QueryContext(vec=vec, payload=ctx)

    def _query_aux_one(self, vec: np.ndarray):
        return None

    def query_aux(self, queries: np.ndarray):
        """Batched query payload for the cores (None when the raw vector suffices)."""
        return None

    # -- distances

    def asym_distance(self, ctx: QueryContext, vid: int) -> float:
        return float(self._dist.asym_many(ctx.payload, np.array([vid]))[0])

    def asym_distances(self, ctx: QueryContext, vids: np.ndarray) -> np.ndarray:
        return self._dist.asym_many(ctx.payload, np.asarray(vids, dtype=np.int64))

    def sym_distance(self, a: int, b: int) -> float:
        return self._dist.sym_one(a, b)

    def vector(self, vid: int) -> np.ndarray:
        return self.dataset.data[vid]

    # -- diagnostics hooks (error vectors live in a frame where exact
    #    comparisons are preserved; see flashann.diagnostics)

    def exact_frame(self, vec: np.ndarray) -> np.ndarray:
        """Vector expressed in the frame the codes approximate (default: identity)."""
        return np.asarray(vec, dtype=np.float64)

    @abstractmethod
    def reconstruct(self, vec: np.ndarray) -> np.ndarray:
        """Decoded approximation of ``vec`` in the exact_frame, float64."""

    # -- persistence

    @abstractmethod
    def state_dict(self) -> dict:
        """Model arrays/scalars sufficient to rebuild the provider (codes excluded)."""

    @classmethod
    @abstractmethod
    def from_state(cls, state: dict) -> "DistanceProvider":
        ...
