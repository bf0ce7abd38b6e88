"""Query-time search with optional full-precision reranking, plus the metrics:
recall@k, average distance ratio, queries/second, and software counters.

Recall is |G intersect S| / k.  The distance ratio averages true (square
root) distances of returned vs. true neighbors, matched by rank; terms whose
true neighbor sits at distance zero are skipped.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import core
from .dataset import GroundTruth, VectorDataset
from .errors import ConfigError
from .graph import GraphIndex

RECALL_FORMULA = "recall = |G intersect S| / k"


@dataclass
class SearchParams:
    ef: int
    k: int = 1
    rerank_depth: int = 0  # 0 disables reranking

    def __post_init__(self):
        if self.k < 1 or self.ef < self.k:
            raise ConfigError(f"need 1 <= k <= ef, got k={self.k} ef={self.ef}")
        if self.rerank_depth and self.rerank_depth < self.k:
            raise ConfigError("rerank_depth must be >= k when reranking is on")


@dataclass
class EvalReport:
    strategy: str
    ef: int
    k: int
    rerank_depth: int
    recall: float
    adr: float
    qps: float
    build_seconds: float
    coding_seconds: float
    graph_seconds: float
    threads: int
    kernel: str
    dist_comps: int = 0
    sym_comps: int = 0
    kernel_calls: int = 0
    visited: int = 0
    register_loads_per_batch: int = 0
    register_loads_tablewidth: int = 0

    CSV_COLUMNS = (
        "strategy", "ef", "k", "rerank_depth", "recall", "adr", "qps",
        "build_seconds", "coding_seconds", "graph_seconds", "threads", "kernel",
        "dist_comps", "sym_comps", "kernel_calls", "visited",
        "register_loads_per_batch", "register_loads_tablewidth",
    )

    def row(self) -> list:
        d = asdict(self)
        return [d[c] for c in self.CSV_COLUMNS]


def search_batch(g: GraphIndex, provider, queries: np.ndarray, params: SearchParams,
                 threads: int = 1, kernel: str | None = None, core_impl=None):
    """Top-k ids and squared distances for each query row."""
    impl = core_impl or core.active_core()
    kid = core.resolve_kernel(kernel, impl)
    queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float32)
    if queries.shape[1] != g.dim:
        raise ConfigError(f"query dimension {queries.shape[1]} != index dimension {g.dim}")
    if g.entry_point < 0:
        raise ConfigError("cannot search an empty graph")
    qaux = provider.query_aux(queries)
    ids, dists, counters = impl.search_batch(
        provider.kind_id, provider.core_arrays(), g.levels, g.base_blocks,
        g.upper_offsets, g.upper_blocks, g.params.C, g.params.R,
        g.entry_point, g.max_layer, queries, qaux,
        params.ef, params.k, params.rerank_depth, threads=threads, kernel=kid,
    )
    return ids, dists, counters


def search(g: GraphIndex, provider, query: np.ndarray, params: SearchParams,
           kernel: str | None = None, core_impl=None) -> list[tuple[int, float]]:
    """Single-query convenience wrapper; returns [(id, squared distance)]."""
    ids, dists, _ = search_batch(g, provider, np.atleast_2d(query), params,
                                 threads=1, kernel=kernel, core_impl=core_impl)
    return [(int(i), float(d)) for i, d in zip(ids[0], dists[0]) if i >= 0]


def recall_at_k(result_ids: np.ndarray, gt: GroundTruth) -> float:
    """Mean |G intersect S| / k over queries."""
    k = gt.k
    hits = 0
    for row, truth in zip(result_ids, gt.ids):
        hits += len(set(int(i) for i in row[:k] if i >= 0) & set(int(t) for t in truth[:k]))
    return hits / (len(gt.ids) * k)


def average_distance_ratio(dataset: VectorDataset, queries: np.ndarray,
                           result_ids: np.ndarray, gt: GroundTruth) -> float:
    """Mean over queries of the rank-matched true-distance ratios (>= 1 up to
    float noise); zero-distance ground-truth terms are skipped."""
    k = gt.k
    ratios = []
    for qi in range(len(queries)):
        q = queries[qi].astype(np.float64)
        terms = []
        for j in range(k):
            rid = int(result_ids[qi, j])
            gd = float(np.sqrt(gt.dists[qi, j]))
            if rid < 0 or gd == 0.0:
                continue
            rd = float(np.linalg.norm(dataset.data[rid].astype(np.float64) - q))
            terms.append(rd / gd)
        if terms:
            ratios.append(float(np.mean(terms)))
    return float(np.mean(ratios)) if ratios else 1.0


def evaluate(g: GraphIndex, provider, dataset: VectorDataset, queries: np.ndarray,
             gt: GroundTruth, ef_grid, params_k: int = 1, rerank_depth: int = 0,
             threads: int = 1, kernel: str | None = None, strategy: str = "",
             build_seconds: float = 0.0, coding_seconds: float = 0.0,
             graph_seconds: float = 0.0, core_impl=None) -> list[EvalReport]:
    """Sweep the search width and measure recall, distance ratio, and QPS."""
    queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float32)
    if gt.ids.shape[0] != queries.shape[0]:
        raise ConfigError("ground truth does not match the query count")
    if params_k > gt.k:
        raise ConfigError(f"k={params_k} exceeds ground-truth depth {gt.k}")
    reports = []
    kernel_name = (core_impl or core.active_core()).available_kernels()[
        core.resolve_kernel(kernel, core_impl or core.active_core())]
    m = getattr(provider, "code_subspaces", 0)
    for ef in ef_grid:
        params = SearchParams(ef=int(ef), k=params_k, rerank_depth=rerank_depth)
        t0 = time.perf_counter()
        ids, _, counters = search_batch(g, provider, queries, params,
                                        threads=threads, kernel=kernel,
                                        core_impl=core_impl)
        elapsed = time.perf_counter() - t0
        gt_k = GroundTruth(k=params_k, ids=gt.ids[:, :params_k], dists=gt.dists[:, :params_k])
        reports.append(EvalReport(
            strategy=strategy, ef=int(ef), k=params_k, rerank_depth=rerank_depth,
            recall=recall_at_k(ids, gt_k),
            adr=average_distance_ratio(dataset, queries, ids, gt_k),
            qps=len(queries) / elapsed if elapsed > 0 else float("inf"),
            build_seconds=build_seconds, coding_seconds=coding_seconds,
            graph_seconds=graph_seconds, threads=threads, kernel=kernel_name,
            dist_comps=counters.get("dist_comps", 0),
            sym_comps=counters.get("sym_comps", 0),
            kernel_calls=counters.get("kernel_calls", 0),
            visited=counters.get("visited", 0),
            register_loads_per_batch=counters.get("kernel_calls", 0) * m,
            register_loads_tablewidth=counters.get("kernel_calls", 0) * 16 * m * 8 // 128,
        ))
    return reports


def write_csv(reports: list[EvalReport], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(EvalReport.CSV_COLUMNS)
        for r in reports:
            w.writerow(r.row())


def write_json_summary(reports: list[EvalReport], path, extra: dict | None = None) -> None:
    payload = {"schema": 1, "recall_formula": RECALL_FORMULA,
               "reports": [asdict(r) for r in reports]}
    if extra:
        payload.update(extra)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, default=float)
