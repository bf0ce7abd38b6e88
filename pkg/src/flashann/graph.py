"""Layered proximity-graph container and its structural rules.

The graph stores one contiguous block per (vertex, layer): neighbor count,
fixed-capacity neighbor ids, and (for the compact strategy) the neighbors'
codewords grouped for register-width lookups.  Base layer capacity is twice
the upper-layer capacity.  A vertex assigned top layer L owns rows for layers
1..L in one contiguous slab; layer membership is therefore downward closed by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import layout
from .errors import ConfigError

GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@dataclass
class BuildParams:
    """Construction hyper-parameters: candidate width, neighbor cap, seed, workers."""

    C: int = 1024
    R: int = 32
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.R < 2:
            raise ConfigError("R must be >= 2")
        if self.R > self.C:
            raise ConfigError(f"R={self.R} must not exceed C={self.C}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def ml(self) -> float:
        """Layer-assignment normalizer 1/ln(R)."""
        return 1.0 / math.log(self.R)

    def cap(self, layer: int) -> int:
        return 2 * self.R if layer == 0 else self.R


def layer_from_uniform(u: float, R: int) -> int:
    """Exponentially decaying layer draw: floor(-ln(u) / ln(R)) for u in (0, 1]."""
    return int(math.floor(-math.log(u) / math.log(R)))


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.uint64)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def uniform_draws(n: int, seed: int) -> np.ndarray:
    """Per-vertex uniforms in (0, 1], a pure function of (seed, vertex id)."""
    states = (np.arange(1, n + 1, dtype=np.uint64) * GOLDEN) + np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    z = _splitmix64(states)
    return ((z >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53


def assign_layers(n: int, seed: int, R: int) -> np.ndarray:
    """Deterministic top-layer per vertex id."""
    if n == 0:
        return np.zeros(0, dtype=np.int32)
    u = uniform_draws(n, seed)
    ml = 1.0 / math.log(R)
    return np.floor(-np.log(u) * ml).astype(np.int32)


class GraphIndex:
    """Adjacency arrays plus entry point for a built (or in-progress) index."""

    def __init__(self, n: int, dim: int, params: BuildParams, strategy: str,
                 code_subspaces: int, levels: np.ndarray):
        self.dim = dim
        self.params = params
        self.strategy = strategy
        self.code_subspaces = code_subspaces
        self.levels = np.ascontiguousarray(levels, dtype=np.int32)
        self.base_cap = 2 * params.R
        self.upper_cap = params.R
        self.base_blocks = layout.alloc_blocks(n, self.base_cap, code_subspaces)
        counts = self.levels.astype(np.int64)
        self.upper_offsets = np.where(counts > 0, np.cumsum(counts) - counts, -1)
        self.upper_blocks = layout.alloc_blocks(int(counts.sum()), self.upper_cap, code_subspaces)
        self.entry_point = -1
        self.max_layer = -1
        self.counters: dict[str, int] = {}

    @property
    def n(self) -> int:
        return self.base_blocks.shape[0]

    def vertex_level(self, v: int) -> int:
        return int(self.levels[v])

    def _row(self, v: int, layer: int):
        if layer == 0:
            return self.base_blocks, v, self.base_cap
        if layer > self.levels[v]:
            raise ConfigError(f"vertex {v} absent from layer {layer}")
        return self.upper_blocks, int(self.upper_offsets[v]) + layer - 1, self.upper_cap

    def neighbors(self, v: int, layer: int) -> np.ndarray:
        blocks, row, cap = self._row(v, layer)
        return layout.read_ids(blocks, row, cap)

    def neighbor_codes(self, v: int, layer: int) -> np.ndarray:
        blocks, row, cap = self._row(v, layer)
        return layout.read_neighbor_codes(blocks, row, cap, self.code_subspaces)

    def degree_stats(self, layer: int = 0) -> tuple[float, int]:
        """(mean degree, max degree) over vertices present at the layer."""
        degs = [len(self.neighbors(v, layer)) for v in range(self.n) if layer <= self.levels[v]]
        return float(np.mean(degs)), int(np.max(degs))

    def core_arrays(self) -> dict:
        return {
            "levels": self.levels,
            "base_blocks": self.base_blocks,
            "upper_offsets": self.upper_offsets,
            "upper_blocks": self.upper_blocks,
        }


def check_invariants(graph: GraphIndex, provider=None, heuristic_sample: int = 100,
                     seed: int = 0) -> list[str]:
    """Sweep structural rules; returns human-readable violations (empty = clean).

    With a provider, additionally re-runs the diversity pruner over sampled
    vertices' neighbor lists and verifies the pairwise property of its output.
    """
    bad: list[str] = []
    n = graph.n
    if n == 0:
        return bad
    ent = graph.entry_point
    if not 0 <= ent < n:
        bad.append(f"entry point {ent} out of range")
    elif graph.levels[ent] != graph.max_layer:
        bad.append("entry point is not on the top layer")
    if graph.levels.max(initial=0) != graph.max_layer:
        bad.append("max_layer disagrees with assigned levels")

    for layer in range(0, graph.max_layer + 1):
        cap = graph.params.cap(layer)
        present = np.flatnonzero(graph.levels >= layer) if layer else np.arange(n)
        for v in present:
            nbrs = graph.neighbors(int(v), layer)
            if len(nbrs) > cap:
                bad.append(f"vertex {v} layer {layer}: degree {len(nbrs)} > cap {cap}")
            if (nbrs == v).any():
                bad.append(f"vertex {v} layer {layer}: self loop")
            if len(nbrs) and (nbrs.min() < 0 or nbrs.max() >= n):
                bad.append(f"vertex {v} layer {layer}: neighbor id out of range")
            elif layer and len(nbrs) and (graph.levels[nbrs] < layer).any():
                bad.append(f"vertex {v} layer {layer}: neighbor below its layer")

    if provider is not None and n > 1:
        rng = np.random.default_rng(seed)
        sample = rng.choice(n, size=min(heuristic_sample, n), replace=False)
        for v in sample:
            v = int(v)
            nbrs = graph.neighbors(v, 0)
            if len(nbrs) < 2:
                continue
            dists = np.array([provider.sym_distance(v, int(u)) for u in nbrs])
            order = np.lexsort((nbrs, dists))
            cand = [(int(nbrs[j]), float(dists[j])) for j in order]
            kept = select_reference(cand, graph.params.cap(0), provider)
            for a in range(len(kept)):
                for b in range(a + 1, len(kept)):
                    dv = dict(cand)[kept[b]]
                    if provider.sym_distance(kept[a], kept[b]) < dv - 1e-9 * (1.0 + dv):
                        bad.append(f"vertex {v}: pruner output violates pairwise rule")
    return bad


def select_reference(cand: list[tuple[int, float]], cap: int, provider) -> list[int]:
    """Reference diversity pruner used by the invariant sweep."""
    kept: list[int] = []
    for v, dv in cand:
        if all(provider.sym_distance(u, v) >= dv for u in kept):
            kept.append(v)
            if len(kept) == cap:
                break
    return kept
