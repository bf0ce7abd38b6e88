"""Pure-Python/numpy implementation of the hot kernels.

This module is the semantic reference for the compiled extension in
``flashann._kernels``: same graph layout, same candidate-set rules, same
saturating 8-bit table arithmetic.  It is selected automatically when the
extension is unavailable (or forced via FLASHANN_PURE_PYTHON=1) and is what
the kernel benchmark compares against.  Inserts run serially here; the
``threads`` argument is accepted for interface parity.
"""

from __future__ import annotations

import heapq

import numpy as np

from . import layout
from .errors import ConfigError

KIND_EXACT = 0
KIND_PQ = 1
KIND_SQ = 2
KIND_PCA = 3
KIND_FLASH = 4

KERNEL_NAMES = ("scalar", "vector128", "vector256", "vector512")

CORE_NAME = "python"


def available_kernels() -> tuple[str, ...]:
    return ("scalar",)


# ---------------------------------------------------------------------------
# table kernels


def flash_batch_distance(adt: np.ndarray, codes: np.ndarray, kernel: int = 0) -> np.ndarray:
    """Distances of one query to a 16-slot batch of neighbors.

    adt: (M, 16) uint8 quantized query-to-centroid table.
    codes: (M, 16) uint8 subspace-major codewords of the batch.
    Returns 16 uint8 lane accumulators with saturating addition.
    """
    acc = np.zeros(layout.BATCH, dtype=np.uint16)
    for i in range(adt.shape[0]):
        np.minimum(acc + adt[i, codes[i]], 255, out=acc)
    return acc.astype(np.uint8)


def flash_asym_many(adt: np.ndarray, code_rows: np.ndarray) -> np.ndarray:
    """Saturating table-sum distances for many code rows: (n, M) uint8 -> (n,)."""
    acc = np.zeros(code_rows.shape[0], dtype=np.uint16)
    for i in range(adt.shape[0]):
        np.minimum(acc + adt[i, code_rows[:, i]], 255, out=acc)
    return acc


def flash_sdt_distance(sdt: np.ndarray, code_a: np.ndarray, code_b: np.ndarray) -> int:
    """Saturating sum of centroid-pair table entries for two code rows."""
    acc = 0
    for i in range(sdt.shape[0]):
        acc = min(acc + int(sdt[i, code_a[i], code_b[i]]), 255)
    return acc


def flash_sdt_many(sdt: np.ndarray, code_a: np.ndarray, code_rows: np.ndarray) -> np.ndarray:
    acc = np.zeros(code_rows.shape[0], dtype=np.uint16)
    for i in range(sdt.shape[0]):
        np.minimum(acc + sdt[i, code_a[i], code_rows[:, i]], 255, out=acc)
    return acc


def quantize_distance(dist, dist_min: float, delta: float) -> np.ndarray:
    """Map a float distance onto the 8-bit grid: clamp, scale, floor.

    Inputs at or above the top of the range map to 255 exactly.
    """
    d = np.asarray(dist, dtype=np.float64)
    dmax = dist_min + delta
    t = np.floor((np.clip(d, dist_min, dmax) - dist_min) / delta * 255.0)
    q = np.clip(t, 0.0, 255.0)
    return np.where(d >= dmax, 255.0, q).astype(np.uint8)


def flash_encode_adt(
    cent: np.ndarray,
    dims: np.ndarray,
    offs: np.ndarray,
    dist_min: float,
    delta: float,
    reduced: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Codewords and quantized query table in one pass over the centroid distances.

    cent: (M, K, dmax) float32 padded centroids; dims/offs give each
    subspace's width and start inside the reduced vector.
    """
    m, k, _ = cent.shape
    code = np.empty(m, dtype=np.uint8)
    adt = np.empty((m, k), dtype=np.uint8)
    red = np.asarray(reduced, dtype=np.float64)
    for i in range(m):
        sub = red[offs[i] : offs[i] + dims[i]]
        d2 = ((cent[i, :, : dims[i]].astype(np.float64) - sub) ** 2).sum(1)
        code[i] = int(d2.argmin())
        adt[i] = quantize_distance(d2, dist_min, delta)
    return code, adt


# ---------------------------------------------------------------------------
# provider distance dispatch (vectorized over neighbor id lists)


class _Dist:
    """Distance evaluations for one strategy over the attached arrays."""

    def __init__(self, kind: int, prov: dict):
        self.kind = kind
        self.p = prov

    def make_ctx(self, vec: np.ndarray, aux) -> dict:
        """aux is the strategy's prepared query payload (see search_batch)."""
        kind, p = self.kind, self.p
        ctx = {"vec": vec}
        if kind == KIND_PQ:
            ctx["adc"] = aux if aux is not None else _adc_table(p, vec)
        elif kind == KIND_SQ:
            ctx["code"] = aux
        elif kind == KIND_PCA:
            ctx["red"] = aux
        elif kind == KIND_FLASH:
            code, adt = flash_encode_adt(
                p["cent"], p["dims"], p["offs"], p["dist_min"], p["delta"], aux
            )
            ctx["code"], ctx["adt"] = code, adt
        return ctx

    def asym_many(self, ctx: dict, ids: np.ndarray) -> np.ndarray:
        kind, p = self.kind, self.p
        if kind == KIND_EXACT:
            d = p["vecs"][ids].astype(np.float64) - ctx["vec"]
            return (d * d).sum(1)
        if kind == KIND_PQ:
            rows = p["codes"][ids]
            return np.take_along_axis(ctx["adc"], rows.T.astype(np.intp), axis=1).sum(0)
        if kind == KIND_SQ:
            d = p["codes"][ids].astype(np.int32) - ctx["code"].astype(np.int32)
            return (d * d).sum(1).astype(np.float64)
        if kind == KIND_PCA:
            d = p["red"][ids].astype(np.float64) - ctx["red"]
            return (d * d).sum(1)
        return flash_asym_many(ctx["adt"], p["codes"][ids]).astype(np.float64)

    def sym_many(self, v: int, ids: np.ndarray) -> np.ndarray:
        kind, p = self.kind, self.p
        if kind == KIND_EXACT:
            d = p["vecs"][ids].astype(np.float64) - p["vecs"][v].astype(np.float64)
            return (d * d).sum(1)
        if kind == KIND_PQ:
            a = p["codes"][v]
            rows = p["codes"][ids]
            m = len(a)
            return p["sdc"][np.arange(m)[:, None], a[:, None].astype(np.intp),
                            rows.T.astype(np.intp)].sum(0).astype(np.float64)
        if kind == KIND_SQ:
            d = p["codes"][ids].astype(np.int32) - p["codes"][v].astype(np.int32)
            return (d * d).sum(1).astype(np.float64)
        if kind == KIND_PCA:
            d = p["red"][ids].astype(np.float64) - p["red"][v].astype(np.float64)
            return (d * d).sum(1)
        return flash_sdt_many(p["sdt"], p["codes"][v], p["codes"][ids]).astype(np.float64)

    def sym_one(self, a: int, b: int) -> float:
        return float(self.sym_many(a, np.array([b]))[0])


def _adc_table(prov: dict, vec: np.ndarray) -> np.ndarray:
    cent, dims, offs = prov["cent"], prov["dims"], prov["offs"]
    m, k, _ = cent.shape
    out = np.empty((m, k), dtype=np.float64)
    v = vec.astype(np.float64)
    for i in range(m):
        sub = v[offs[i] : offs[i] + dims[i]]
        out[i] = ((cent[i, :, : dims[i]].astype(np.float64) - sub) ** 2).sum(1)
    return out


# ---------------------------------------------------------------------------
# graph state


class GraphWriter:
    """Mutable view over the shared block arrays during construction."""

    def __init__(self, kind, prov, levels, base_blocks, upper_offsets, upper_blocks, C, R):
        self.kind = kind
        self.prov = prov
        self.dist = _Dist(kind, prov)
        self.levels = levels
        self.base = base_blocks
        self.uoff = upper_offsets
        self.upper = upper_blocks
        self.C = C
        self.R = R
        self.base_cap = 2 * R
        self.upper_cap = R
        self.m_code = prov["codes"].shape[1] if kind == KIND_FLASH else 0
        self.entry = -1
        self.max_layer = -1
        self.inserted: set[int] = set()
        self.counters = {"dist_comps": 0, "sym_comps": 0, "kernel_calls": 0, "visited": 0}

    # -- block plumbing

    def _row(self, v: int, layer: int):
        if layer == 0:
            return self.base, v, self.base_cap
        return self.upper, int(self.uoff[v]) + layer - 1, self.upper_cap

    def neighbors(self, v: int, layer: int) -> np.ndarray:
        blocks, row, cap = self._row(v, layer)
        return layout.read_ids(blocks, row, cap)

    def set_neighbors(self, v: int, layer: int, ids: np.ndarray) -> None:
        blocks, row, cap = self._row(v, layer)
        codes = self.prov["codes"][ids] if self.m_code else None
        layout.write_vertex_block(blocks, row, cap, self.m_code, ids, codes)

    def append_neighbor(self, v: int, layer: int, u: int) -> None:
        blocks, row, cap = self._row(v, layer)
        count = layout.read_count(blocks, row)
        ids = blocks[row, 4 : 4 + 4 * cap].view(np.int32)
        if self.m_code:
            b, lane = divmod(count, layout.BATCH)
            off = layout.codes_offset(cap) + b * self.m_code * layout.BATCH
            blocks[row, off + lane : off + self.m_code * layout.BATCH : layout.BATCH] = (
                self.prov["codes"][u]
            )
        ids[count] = u
        layout.write_count(blocks, row, count + 1)

    # -- search within one layer

    def greedy_search_layer(self, ctx, entry: int, width: int, layer: int, t_trace=None):
        """Top-``width`` candidates for the context's vector, ascending distance.

        Classic best-first expansion with a visited set; stops once the
        nearest unexpanded candidate cannot improve the full set.
        """
        d0 = float(self.dist.asym_many(ctx, np.array([entry]))[0])
        self.counters["dist_comps"] += 1
        visited = {entry}
        frontier = [(d0, entry)]
        result = [(-d0, entry)]  # max-heap via negation
        while frontier:
            d, v = heapq.heappop(frontier)
            if len(result) >= width and d > -result[0][0]:
                break
            self.counters["visited"] += 1
            nbrs = self.neighbors(v, layer)
            fresh = np.array([u for u in nbrs if u >= 0 and u not in visited], dtype=np.int64)
            if len(fresh) == 0:
                continue
            visited.update(int(u) for u in fresh)
            if self.kind == KIND_FLASH:
                self.counters["kernel_calls"] += -(-len(fresh) // layout.BATCH)
            dists = self.dist.asym_many(ctx, fresh)
            self.counters["dist_comps"] += len(fresh)
            for du, u in sorted(zip(dists.tolist(), fresh.tolist())):
                if len(result) < width:
                    heapq.heappush(result, (-du, u))
                    heapq.heappush(frontier, (du, u))
                elif du < -result[0][0]:
                    heapq.heapreplace(result, (-du, u))
                    heapq.heappush(frontier, (du, u))
                else:
                    continue
                if t_trace is not None and len(result) == width:
                    t_trace.append(-result[0][0])
        out = sorted((-nd, u) for nd, u in result)
        return [(u, d) for d, u in out]

    def hill_climb(self, ctx, entry: int, cur_d: float, layer: int):
        cur = entry
        improved = True
        while improved:
            improved = False
            nbrs = self.neighbors(cur, layer)
            nbrs = nbrs[nbrs >= 0]
            if len(nbrs) == 0:
                break
            if self.kind == KIND_FLASH:
                self.counters["kernel_calls"] += -(-len(nbrs) // layout.BATCH)
            dists = self.dist.asym_many(ctx, nbrs)
            self.counters["dist_comps"] += len(nbrs)
            j = int(dists.argmin())
            if dists[j] < cur_d:
                cur_d = float(dists[j])
                cur = int(nbrs[j])
                improved = True
        return cur, cur_d

    # -- neighbor selection

    def select_neighbors(self, cand: list[tuple[int, float]], cap: int) -> list[int]:
        """Diversity pruning: scan ascending, drop v if some kept u is closer
        to v than v is to the inserted vector."""
        kept: list[int] = []
        for v, dv in cand:
            ok = True
            for u in kept:
                self.counters["sym_comps"] += 1
                if self.dist.sym_one(u, v) < dv:
                    ok = False
                    break
            if ok:
                kept.append(v)
                if len(kept) == cap:
                    break
        return kept

    # -- insertion

    def insert(self, x: int) -> None:
        if x in self.inserted:
            raise ConfigError(f"vertex {x} already inserted")
        self.inserted.add(x)
        level = int(self.levels[x])
        if self.kind == KIND_FLASH:
            code, _ = flash_encode_adt(
                self.prov["cent"],
                self.prov["dims"],
                self.prov["offs"],
                self.prov["dist_min"],
                self.prov["delta"],
                self.prov["proj"][x],
            )
            self.prov["codes"][x] = code
        ctx = self._insert_ctx(x)
        if self.entry < 0:
            self.entry = x
            self.max_layer = level
            return
        ep = self.entry
        cur_d = float(self.dist.asym_many(ctx, np.array([ep]))[0])
        self.counters["dist_comps"] += 1
        for layer in range(self.max_layer, level, -1):
            ep, cur_d = self.hill_climb(ctx, ep, cur_d, layer)
        for layer in range(min(self.max_layer, level), -1, -1):
            cand = self.greedy_search_layer(ctx, ep, self.C, layer)
            sel = self.select_neighbors(cand, self.R)
            self.set_neighbors(x, layer, np.array(sel, dtype=np.int64))
            cap = self.base_cap if layer == 0 else self.upper_cap
            for y in sel:
                self._reverse_add(y, x, layer, cap)
            ep = cand[0][0]
        if level > self.max_layer:
            self.entry = x
            self.max_layer = level

    def _insert_ctx(self, x: int) -> dict:
        p = self.prov
        if self.kind == KIND_SQ:
            aux = p["codes"][x]
        elif self.kind == KIND_PCA:
            aux = p["red"][x]
        elif self.kind == KIND_FLASH:
            aux = p["proj"][x]
        else:
            aux = None
        return self.dist.make_ctx(p["vecs"][x].astype(np.float64), aux)

    def _reverse_add(self, y: int, x: int, layer: int, cap: int) -> None:
        nbrs = self.neighbors(y, layer)
        if len(nbrs) < cap:
            self.append_neighbor(y, layer, x)
            return
        ids = np.concatenate([nbrs, [x]])
        dists = self.dist.sym_many(y, ids)
        self.counters["sym_comps"] += len(ids)
        order = np.lexsort((ids, dists))
        cand = [(int(ids[j]), float(dists[j])) for j in order]
        kept = self.select_neighbors(cand, cap)
        self.set_neighbors(y, layer, np.array(kept, dtype=np.int64))


# ---------------------------------------------------------------------------
# public entry points (same shape as the compiled core)


def build_graph(kind, prov, levels, base_blocks, upper_offsets, upper_blocks,
                C, R, threads=1, kernel=0):
    w = GraphWriter(kind, prov, levels, base_blocks, upper_offsets, upper_blocks, C, R)
    for x in range(len(levels)):
        w.insert(x)
    return {"entry_point": w.entry, "max_layer": w.max_layer, "counters": dict(w.counters)}


def search_batch(kind, prov, levels, base_blocks, upper_offsets, upper_blocks,
                 C, R, entry, max_layer, queries, qaux,
                 ef, k, rerank_depth, threads=1, kernel=0):
    if entry < 0:
        raise ConfigError("cannot search an empty graph")
    w = GraphWriter(kind, prov, levels, base_blocks, upper_offsets, upper_blocks, C, R)
    w.entry, w.max_layer = entry, max_layer
    nq = queries.shape[0]
    out_ids = np.full((nq, k), -1, dtype=np.int64)
    out_dists = np.full((nq, k), np.inf, dtype=np.float64)
    vecs = prov["vecs"]
    for qi in range(nq):
        ctx = w.dist.make_ctx(queries[qi].astype(np.float64), None if qaux is None else qaux[qi])
        ep = entry
        cur_d = float(w.dist.asym_many(ctx, np.array([ep]))[0])
        w.counters["dist_comps"] += 1
        for layer in range(max_layer, 0, -1):
            ep, cur_d = w.hill_climb(ctx, ep, cur_d, layer)
        cand = w.greedy_search_layer(ctx, ep, ef, 0)
        if rerank_depth > 0:
            top = cand[: min(rerank_depth, len(cand))]
            ids = np.array([c[0] for c in top], dtype=np.int64)
            d = vecs[ids].astype(np.float64) - queries[qi].astype(np.float64)
            exact = (d * d).sum(1)
            order = np.lexsort((ids, exact))
            cand = [(int(ids[j]), float(exact[j])) for j in order]
        for j in range(min(k, len(cand))):
            out_ids[qi, j], out_dists[qi, j] = cand[j]
    return out_ids, out_dists, dict(w.counters)
