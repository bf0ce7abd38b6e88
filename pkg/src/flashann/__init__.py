"""Graph ANN index construction accelerated by compact vector codes.

Build layered proximity-graph indexes over float vector datasets using one of
five distance strategies: full-precision, product quantization, scalar
quantization, dimensionality reduction, or the register-width compact coding
with quantized distance tables and an access-aware vertex layout.  A compiled
extension carries the hot kernels; a pure-Python fallback with identical
semantics is selected automatically when the extension is unavailable.
"""

from .builder import BuildResult, StrategyParams, build
from .core import HAVE_EXT, core_name
from .dataset import (
    GroundTruth,
    VectorDataset,
    brute_force_knn,
    gen_synthetic,
    load_fvecs,
    load_ivecs,
    save_fvecs,
    save_ivecs,
)
from .evaluation import EvalReport, SearchParams, evaluate, search, search_batch
from .flash import FlashModel, FlashProvider, encode_and_adt, flash_train, sdt_distance
from .graph import BuildParams, GraphIndex, assign_layers, check_invariants
from .providers import (
    DistanceProvider,
    ExactProvider,
    PCAProvider,
    PQProvider,
    SQProvider,
    pca_train,
    pq_train,
    sq_train,
)
from .serialize import load_index, save_index

__version__ = "0.1.0"

__all__ = [
    "BuildParams",
    "BuildResult",
    "DistanceProvider",
    "EvalReport",
    "ExactProvider",
    "FlashModel",
    "FlashProvider",
    "GraphIndex",
    "GroundTruth",
    "HAVE_EXT",
    "PCAProvider",
    "PQProvider",
    "SQProvider",
    "SearchParams",
    "StrategyParams",
    "VectorDataset",
    "assign_layers",
    "brute_force_knn",
    "build",
    "check_invariants",
    "core_name",
    "encode_and_adt",
    "evaluate",
    "flash_train",
    "gen_synthetic",
    "load_fvecs",
    "load_index",
    "load_ivecs",
    "pca_train",
    "pq_train",
    "save_fvecs",
    "save_index",
    "save_ivecs",
    "sdt_distance",
    "search",
    "search_batch",
    "sq_train",
]
