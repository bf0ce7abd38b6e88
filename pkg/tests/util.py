"""Shared helpers for building small hand-wired graphs in tests."""

import numpy as np

from flashann import _pycore, layout
from flashann.dataset import VectorDataset
from flashann.graph import BuildParams, GraphIndex
from flashann.providers import ExactProvider


def manual_exact_graph(coords: np.ndarray, edges: dict[int, list[int]], R: int = 3):
    """Layer-0-only graph over 2-D points with hand-chosen adjacency."""
    n = len(coords)
    params = BuildParams(C=max(8, 2 * R), R=R, seed=0)
    levels = np.zeros(n, dtype=np.int32)
    g = GraphIndex(n, coords.shape[1], params, "exact", 0, levels)
    for v, nbrs in edges.items():
        layout.write_vertex_block(g.base_blocks, v, g.base_cap, 0,
                                  np.array(nbrs, dtype=np.int64))
    provider = ExactProvider()
    provider.attach(VectorDataset(coords))
    return g, provider


def narrated_trace_fixture():
    """Eight labeled points whose best-first expansion from vertex 0 follows a
    known replacement story: candidate width 4, final set {17, 5, 3, 9}, with
    the running worst-distance passing through 0.54 then 0.49 (plain
    distances; the engine compares squares).
    """
    radii = {17: 0.20, 5: 0.30, 3: 0.38, 9: 0.43, 15: 0.47, 0: 0.49, 13: 0.54}
    angles = {17: 0.0, 3: 10.0, 9: -14.0, 5: 95.0, 0: 45.0, 15: -60.0, 13: 150.0}
    coords = np.full((18, 2), 50.0, dtype=np.float64)  # unused ids parked far away
    for v, r in radii.items():
        a = np.radians(angles[v])
        coords[v] = (r * np.cos(a), r * np.sin(a))
    edges = {
        0: [5, 9, 13],
        5: [0, 15],
        9: [0, 17],
        17: [9, 3],
        3: [17],
        15: [5],
        13: [0],
    }
    query = np.zeros(2, dtype=np.float64)  # the inserted point sits at the origin
    g, provider = manual_exact_graph(coords.astype(np.float32), edges, R=3)
    return g, provider, query, radii


def py_writer(g, provider):
    """GraphWriter over an existing graph's arrays (python core)."""
    w = _pycore.GraphWriter(
        provider.kind_id, provider.core_arrays(), g.levels, g.base_blocks,
        g.upper_offsets, g.upper_blocks, g.params.C, g.params.R,
    )
    w.entry = g.entry_point
    w.max_layer = g.max_layer
    return w
