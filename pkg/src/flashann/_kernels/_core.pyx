# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled compute core: graph construction and search hot paths.

Mirrors the semantics of flashann._pycore with C-level heaps, per-vertex
OpenMP locks for concurrent insertion, and the vector batch-lookup kernels
from _simd.h.  Neighbor-list writers publish the live count last so that
lock-free readers observe a consistent prefix.
"""

cimport openmp
from cython.parallel cimport prange
from libc.math cimport INFINITY
from libc.stdlib cimport free, malloc
from libc.string cimport memset

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from "_simd.h" nogil:
    int FA_HAVE_V128
    int FA_HAVE_V256
    int FA_HAVE_V512
    void fa_store_count(cnp.int32_t* p, cnp.int32_t v)
    cnp.int32_t fa_load_count(const cnp.int32_t* p)
    double fa_l2sq_f32(const float* a, const float* b, int d)
    double fa_l2sq_u8(const unsigned char* a, const unsigned char* b, int d)
    double fa_adc_sum(const float* adc, const unsigned char* code, int m, int k)
    double fa_sdc_sum(const float* sdc, const unsigned char* ca, const unsigned char* cb, int m, int k)
    double fa_adt_sum_sat(const unsigned char* adt, const unsigned char* code, int m)
    double fa_sdt_sum_sat(const unsigned char* sdt, const unsigned char* ca, const unsigned char* cb, int m)
    unsigned char fa_quantize(double d, double dmin, double delta)
    void fa_batch_scalar(const unsigned char* adt, const unsigned char* codes, int m, unsigned char* out)
    void fa_batch_lanes(const unsigned char* adt, const unsigned char* codes, int m, int nb, int kernel, unsigned char* out)
    void fa_pq_adc(const float* vec, const float* cent, const cnp.int32_t* dims, const cnp.int32_t* offs, int m, int k, int dmax, float* out)
    void fa_flash_encode_adt(const float* red, const float* cent, const cnp.int32_t* dims, const cnp.int32_t* offs, int m, int dmax, double dmin, double delta, unsigned char* code_out, unsigned char* adt_out)
    ctypedef struct fa_pair:
        double d
        cnp.int32_t id
    void fa_sort_pairs(fa_pair* p, int n)

CORE_NAME = "compiled"

KIND_EXACT = 0
KIND_PQ = 1
KIND_SQ = 2
KIND_PCA = 3
KIND_FLASH = 4

cdef enum:
    K_EXACT = 0
    K_PQ = 1
    K_SQ = 2
    K_PCA = 3
    K_FLASH = 4


def available_kernels():
    names = ["scalar"]
    if FA_HAVE_V128:
        names.append("vector128")
    if FA_HAVE_V256:
        names.append("vector256")
    if FA_HAVE_V512:
        names.append("vector512")
    return tuple(names)


# ---------------------------------------------------------------------------
# C-side state

cdef struct Prov:
    int kind
    int dim
    const float* vecs
    int m
    int k
    int dmax
    const float* cent
    const cnp.int32_t* dims
    const cnp.int32_t* offs
    const float* sdc
    unsigned char* codes
    size_t code_stride
    const float* red
    int red_dim
    const unsigned char* sdt
    double dmin
    double delta
    int kernel

cdef struct Graph:
    int n
    int base_cap
    int upper_cap
    int mcode
    size_t base_stride
    size_t upper_stride
    size_t base_codes_off
    size_t upper_codes_off
    unsigned char* base
    unsigned char* upper
    const cnp.int32_t* levels
    const cnp.int64_t* uoff
    cnp.int32_t* state  # [entry_point, max_layer]

cdef struct QCtx:
    const float* vec
    const float* red
    const unsigned char* code
    const float* adc
    const unsigned char* adt

cdef struct Scratch:
    QCtx q
    unsigned int* visited
    unsigned int epoch
    double* fr_d
    cnp.int32_t* fr_id
    double* re_d
    cnp.int32_t* re_id
    double* out_d
    cnp.int32_t* out_id
    fa_pair* pairs
    cnp.int32_t* sel
    cnp.int32_t* rsel
    cnp.int32_t* cand_ids
    double* cand_d
    unsigned char* lanes
    float* adc
    unsigned char* adt
    unsigned char* qcode
    long long c_dist
    long long c_sym
    long long c_kernel
    long long c_visited


cdef inline unsigned char* blk(Graph* g, int layer, int v) noexcept nogil:
    if layer == 0:
        return g.base + (<size_t>v) * g.base_stride
    return g.upper + (<size_t>(g.uoff[v] + layer - 1)) * g.upper_stride


cdef inline int layer_cap(Graph* g, int layer) noexcept nogil:
    return g.base_cap if layer == 0 else g.upper_cap


cdef inline size_t codes_off(Graph* g, int layer) noexcept nogil:
    return g.base_codes_off if layer == 0 else g.upper_codes_off


cdef inline const float* fptr_off(const float* base, size_t row, size_t stride) noexcept nogil:
    if base == NULL:
        return NULL
    return base + row * stride


cdef inline const unsigned char* uptr_off(const unsigned char* base, size_t row, size_t stride) noexcept nogil:
    if base == NULL:
        return NULL
    return base + row * stride


cdef inline double asym_one(Prov* p, QCtx* q, int v) noexcept nogil:
    if p.kind == K_EXACT:
        return fa_l2sq_f32(q.vec, p.vecs + (<size_t>v) * p.dim, p.dim)
    elif p.kind == K_PQ:
        return fa_adc_sum(q.adc, p.codes + (<size_t>v) * p.code_stride, p.m, p.k)
    elif p.kind == K_SQ:
        return fa_l2sq_u8(q.code, p.codes + (<size_t>v) * p.code_stride, p.dim)
    elif p.kind == K_PCA:
        return fa_l2sq_f32(q.red, p.red + (<size_t>v) * p.red_dim, p.red_dim)
    return fa_adt_sum_sat(q.adt, p.codes + (<size_t>v) * p.code_stride, p.m)


cdef inline double sym_one(Prov* p, int a, int b) noexcept nogil:
    if p.kind == K_EXACT:
        return fa_l2sq_f32(p.vecs + (<size_t>a) * p.dim, p.vecs + (<size_t>b) * p.dim, p.dim)
    elif p.kind == K_PQ:
        return fa_sdc_sum(p.sdc, p.codes + (<size_t>a) * p.code_stride,
                          p.codes + (<size_t>b) * p.code_stride, p.m, p.k)
    elif p.kind == K_SQ:
        return fa_l2sq_u8(p.codes + (<size_t>a) * p.code_stride,
                          p.codes + (<size_t>b) * p.code_stride, p.dim)
    elif p.kind == K_PCA:
        return fa_l2sq_f32(p.red + (<size_t>a) * p.red_dim, p.red + (<size_t>b) * p.red_dim, p.red_dim)
    return fa_sdt_sum_sat(p.sdt, p.codes + (<size_t>a) * p.code_stride,
                          p.codes + (<size_t>b) * p.code_stride, p.m)


# ---------------------------------------------------------------------------
# binary heaps over parallel (dist, id) arrays

cdef inline void minheap_push(double* hd, cnp.int32_t* hi, int* size, double d, int v) noexcept nogil:
    cdef int i = size[0]
    cdef int par
    cdef double td
    cdef cnp.int32_t tv
    hd[i] = d
    hi[i] = v
    size[0] = i + 1
    while i > 0:
        par = (i - 1) >> 1
        if hd[par] <= hd[i]:
            break
        td = hd[par]; hd[par] = hd[i]; hd[i] = td
        tv = hi[par]; hi[par] = hi[i]; hi[i] = tv
        i = par


cdef inline void minheap_pop(double* hd, cnp.int32_t* hi, int* size) noexcept nogil:
    cdef int n = size[0] - 1
    cdef int i = 0
    cdef int c
    cdef double td
    cdef cnp.int32_t tv
    hd[0] = hd[n]
    hi[0] = hi[n]
    size[0] = n
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and hd[c + 1] < hd[c]:
            c += 1
        if hd[i] <= hd[c]:
            break
        td = hd[i]; hd[i] = hd[c]; hd[c] = td
        tv = hi[i]; hi[i] = hi[c]; hi[c] = tv
        i = c


cdef inline void maxheap_push(double* hd, cnp.int32_t* hi, int* size, double d, int v) noexcept nogil:
    cdef int i = size[0]
    cdef int par
    cdef double td
    cdef cnp.int32_t tv
    hd[i] = d
    hi[i] = v
    size[0] = i + 1
    while i > 0:
        par = (i - 1) >> 1
        if hd[par] >= hd[i]:
            break
        td = hd[par]; hd[par] = hd[i]; hd[i] = td
        tv = hi[par]; hi[par] = hi[i]; hi[i] = tv
        i = par


cdef inline void maxheap_pop(double* hd, cnp.int32_t* hi, int* size) noexcept nogil:
    cdef int n = size[0] - 1
    cdef int i = 0
    cdef int c
    cdef double td
    cdef cnp.int32_t tv
    hd[0] = hd[n]
    hi[0] = hi[n]
    size[0] = n
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and hd[c + 1] > hd[c]:
            c += 1
        if hd[i] >= hd[c]:
            break
        td = hd[i]; hd[i] = hd[c]; hd[c] = td
        tv = hi[i]; hi[i] = hi[c]; hi[c] = tv
        i = c


# ---------------------------------------------------------------------------
# layer search

cdef int search_layer(Prov* p, QCtx* q, Graph* g, Scratch* s, int layer,
                      int entry, double entry_d, int width) noexcept nogil:
    """Best-first expansion; results land ascending in s.out_d/s.out_id."""
    cdef int fr_n = 0, re_n = 0
    cdef int cap = layer_cap(g, layer)
    cdef int v, u, j, cnt, nb, i, n_out
    cdef double d, du
    cdef unsigned char* b
    cdef cnp.int32_t* ids
    s.epoch += 1
    cdef unsigned int ep = s.epoch
    s.visited[entry] = ep
    minheap_push(s.fr_d, s.fr_id, &fr_n, entry_d, entry)
    maxheap_push(s.re_d, s.re_id, &re_n, entry_d, entry)
    while fr_n > 0:
        d = s.fr_d[0]
        v = s.fr_id[0]
        minheap_pop(s.fr_d, s.fr_id, &fr_n)
        if re_n >= width and d > s.re_d[0]:
            break
        s.c_visited += 1
        b = blk(g, layer, v)
        cnt = fa_load_count(<cnp.int32_t*>b)
        if cnt > cap:
            cnt = cap
        ids = <cnp.int32_t*>(b + 4)
        if p.kind == K_FLASH:
            nb = (cnt + 15) >> 4
            fa_batch_lanes(q.adt, b + codes_off(g, layer), p.m, nb, p.kernel, s.lanes)
            s.c_kernel += nb
            for j in range(cnt):
                u = ids[j]
                if u < 0 or s.visited[u] == ep:
                    continue
                s.visited[u] = ep
                du = <double>s.lanes[j]
                s.c_dist += 1
                if re_n < width:
                    maxheap_push(s.re_d, s.re_id, &re_n, du, u)
                    minheap_push(s.fr_d, s.fr_id, &fr_n, du, u)
                elif du < s.re_d[0]:
                    maxheap_pop(s.re_d, s.re_id, &re_n)
                    maxheap_push(s.re_d, s.re_id, &re_n, du, u)
                    minheap_push(s.fr_d, s.fr_id, &fr_n, du, u)
        else:
            for j in range(cnt):
                u = ids[j]
                if u < 0 or s.visited[u] == ep:
                    continue
                s.visited[u] = ep
                du = asym_one(p, q, u)
                s.c_dist += 1
                if re_n < width:
                    maxheap_push(s.re_d, s.re_id, &re_n, du, u)
                    minheap_push(s.fr_d, s.fr_id, &fr_n, du, u)
                elif du < s.re_d[0]:
                    maxheap_pop(s.re_d, s.re_id, &re_n)
                    maxheap_push(s.re_d, s.re_id, &re_n, du, u)
                    minheap_push(s.fr_d, s.fr_id, &fr_n, du, u)
    n_out = re_n
    for i in range(n_out - 1, -1, -1):
        s.out_d[i] = s.re_d[0]
        s.out_id[i] = s.re_id[0]
        maxheap_pop(s.re_d, s.re_id, &re_n)
    return n_out


cdef void hill_climb(Prov* p, QCtx* q, Graph* g, Scratch* s, int layer,
                     int* cur, double* curd) noexcept nogil:
    """Width-1 greedy descent within one layer."""
    cdef int improved = 1
    cdef int cap = layer_cap(g, layer)
    cdef int cnt, j, u, nb
    cdef double du
    cdef unsigned char* b
    cdef cnp.int32_t* ids
    while improved:
        improved = 0
        b = blk(g, layer, cur[0])
        cnt = fa_load_count(<cnp.int32_t*>b)
        if cnt > cap:
            cnt = cap
        ids = <cnp.int32_t*>(b + 4)
        if p.kind == K_FLASH:
            nb = (cnt + 15) >> 4
            fa_batch_lanes(q.adt, b + codes_off(g, layer), p.m, nb, p.kernel, s.lanes)
            s.c_kernel += nb
            for j in range(cnt):
                u = ids[j]
                if u < 0:
                    continue
                du = <double>s.lanes[j]
                s.c_dist += 1
                if du < curd[0]:
                    curd[0] = du
                    cur[0] = u
                    improved = 1
        else:
            for j in range(cnt):
                u = ids[j]
                if u < 0:
                    continue
                du = asym_one(p, q, u)
                s.c_dist += 1
                if du < curd[0]:
                    curd[0] = du
                    cur[0] = u
                    improved = 1


cdef int select_heur(Prov* p, Scratch* s, double* cand_d, cnp.int32_t* cand_ids,
                     int ncand, int cap, cnp.int32_t* out) noexcept nogil:
    """Diversity pruning over candidates sorted ascending by distance."""
    cdef int nk = 0
    cdef int j, t, ok, v
    cdef double dv
    for j in range(ncand):
        v = cand_ids[j]
        dv = cand_d[j]
        ok = 1
        for t in range(nk):
            s.c_sym += 1
            if sym_one(p, out[t], v) < dv:
                ok = 0
                break
        if ok:
            out[nk] = v
            nk += 1
            if nk == cap:
                break
    return nk


# ---------------------------------------------------------------------------
# construction

cdef inline void write_code_slot(unsigned char* region, int slot, const unsigned char* code,
                                 int m) noexcept nogil:
    cdef int batch = slot >> 4
    cdef int lane = slot & 15
    cdef unsigned char* base = region + (<size_t>batch) * m * 16 + lane
    cdef int i
    for i in range(m):
        base[i * 16] = code[i]


cdef void write_forward(Prov* p, Graph* g, openmp.omp_lock_t* vlocks, int x, int layer,
                        cnp.int32_t* sel, int nsel) noexcept nogil:
    cdef unsigned char* b = blk(g, layer, x)
    cdef cnp.int32_t* ids = <cnp.int32_t*>(b + 4)
    cdef unsigned char* region
    cdef int j
    openmp.omp_set_lock(&vlocks[x])
    if g.mcode > 0:
        region = b + codes_off(g, layer)
        for j in range(nsel):
            write_code_slot(region, j, p.codes + (<size_t>sel[j]) * p.code_stride, g.mcode)
    for j in range(nsel):
        ids[j] = sel[j]
    fa_store_count(<cnp.int32_t*>b, nsel)
    openmp.omp_unset_lock(&vlocks[x])


cdef void reverse_add(Prov* p, Graph* g, Scratch* s, openmp.omp_lock_t* vlocks,
                      int y, int x, int layer) noexcept nogil:
    cdef int cap = layer_cap(g, layer)
    cdef unsigned char* b = blk(g, layer, y)
    cdef cnp.int32_t* ids = <cnp.int32_t*>(b + 4)
    cdef unsigned char* region
    cdef int cnt, j, nk
    openmp.omp_set_lock(&vlocks[y])
    cnt = (<cnp.int32_t*>b)[0]
    if cnt < cap:
        if g.mcode > 0:
            write_code_slot(b + codes_off(g, layer), cnt,
                            p.codes + (<size_t>x) * p.code_stride, g.mcode)
        ids[cnt] = x
        fa_store_count(<cnp.int32_t*>b, cnt + 1)
    else:
        for j in range(cnt):
            s.pairs[j].d = sym_one(p, y, ids[j])
            s.pairs[j].id = ids[j]
        s.pairs[cnt].d = sym_one(p, y, x)
        s.pairs[cnt].id = x
        s.c_sym += cnt + 1
        fa_sort_pairs(s.pairs, cnt + 1)
        for j in range(cnt + 1):
            s.cand_d[j] = s.pairs[j].d
            s.cand_ids[j] = s.pairs[j].id
        nk = select_heur(p, s, s.cand_d, s.cand_ids, cnt + 1, cap, s.rsel)
        if g.mcode > 0:
            region = b + codes_off(g, layer)
            for j in range(nk):
                write_code_slot(region, j, p.codes + (<size_t>s.rsel[j]) * p.code_stride, g.mcode)
        for j in range(nk):
            ids[j] = s.rsel[j]
        for j in range(nk, cap):
            ids[j] = -1
        fa_store_count(<cnp.int32_t*>b, nk)
    openmp.omp_unset_lock(&vlocks[y])


cdef void prep_qctx(Prov* p, Scratch* s, int x, QCtx* q) noexcept nogil:
    q.vec = p.vecs + (<size_t>x) * p.dim
    q.red = NULL
    q.code = NULL
    q.adc = NULL
    q.adt = NULL
    if p.kind == K_PQ:
        fa_pq_adc(q.vec, p.cent, p.dims, p.offs, p.m, p.k, p.dmax, s.adc)
        q.adc = s.adc
    elif p.kind == K_SQ:
        q.code = p.codes + (<size_t>x) * p.code_stride
    elif p.kind == K_PCA:
        q.red = p.red + (<size_t>x) * p.red_dim
    elif p.kind == K_FLASH:
        fa_flash_encode_adt(p.red + (<size_t>x) * p.red_dim, p.cent, p.dims, p.offs,
                            p.m, p.dmax, p.dmin, p.delta,
                            p.codes + (<size_t>x) * p.code_stride, s.adt)
        q.adt = s.adt
        q.code = p.codes + (<size_t>x) * p.code_stride


cdef void insert_one(Prov* p, Graph* g, Scratch* s, openmp.omp_lock_t* vlocks,
                     openmp.omp_lock_t* glock, int x, int C, int R) noexcept nogil:
    cdef int level = g.levels[x]
    cdef QCtx q
    cdef int ep, ml, hold, layer, nres, nsel, j
    cdef double curd
    prep_qctx(p, s, x, &q)
    openmp.omp_set_lock(glock)
    ep = g.state[0]
    ml = g.state[1]
    hold = level > ml
    if ep < 0:
        g.state[0] = x
        g.state[1] = level
        openmp.omp_unset_lock(glock)
        return
    if not hold:
        openmp.omp_unset_lock(glock)
    curd = asym_one(p, &q, ep)
    s.c_dist += 1
    for layer in range(ml, level, -1):
        hill_climb(p, &q, g, s, layer, &ep, &curd)
    layer = ml if ml < level else level
    while layer >= 0:
        nres = search_layer(p, &q, g, s, layer, ep, curd, C)
        nsel = select_heur(p, s, s.out_d, s.out_id, nres, R, s.sel)
        write_forward(p, g, vlocks, x, layer, s.sel, nsel)
        for j in range(nsel):
            reverse_add(p, g, s, vlocks, s.sel[j], x, layer)
        ep = s.out_id[0]
        curd = s.out_d[0]
        layer -= 1
    if hold:
        g.state[0] = x
        g.state[1] = level
        openmp.omp_unset_lock(glock)


# ---------------------------------------------------------------------------
# python-facing plumbing

cdef object _carr(object a, object dtype):
    return np.ascontiguousarray(a, dtype=dtype)


cdef size_t _ptr(cnp.ndarray a):
    return <size_t>cnp.PyArray_DATA(a)


class _Arrays:
    """Keeps the numpy arrays referenced by raw pointers alive."""

    def __init__(self):
        self.keep = []

    def hold(self, arr):
        self.keep.append(arr)
        return arr


cdef int _fill_prov(Prov* p, int kind, dict prov, int kernel, object keep) except -1:
    cdef cnp.ndarray a
    memset(p, 0, sizeof(Prov))
    p.kind = kind
    p.kernel = kernel
    a = keep.hold(_carr(prov["vecs"], np.float32))
    p.vecs = <const float*>_ptr(a)
    p.dim = a.shape[1]
    if kind == K_PQ or kind == K_FLASH:
        a = keep.hold(_carr(prov["cent"], np.float32))
        p.cent = <const float*>_ptr(a)
        p.m = a.shape[0]
        p.k = a.shape[1]
        p.dmax = a.shape[2]
        a = keep.hold(_carr(prov["dims"], np.int32))
        p.dims = <const cnp.int32_t*>_ptr(a)
        a = keep.hold(_carr(prov["offs"], np.int32))
        p.offs = <const cnp.int32_t*>_ptr(a)
    if kind == K_PQ:
        a = keep.hold(_carr(prov["sdc"], np.float32))
        p.sdc = <const float*>_ptr(a)
    if kind == K_PQ or kind == K_SQ or kind == K_FLASH:
        a = keep.hold(np.ascontiguousarray(prov["codes"]))
        if a.dtype != np.uint8:
            raise TypeError("codes must be uint8")
        p.codes = <unsigned char*>_ptr(a)
        p.code_stride = a.shape[1]
    if kind == K_PCA:
        a = keep.hold(_carr(prov["red"], np.float32))
        p.red = <const float*>_ptr(a)
        p.red_dim = a.shape[1]
    if kind == K_FLASH:
        a = keep.hold(_carr(prov["proj"], np.float32))
        p.red = <const float*>_ptr(a)
        p.red_dim = a.shape[1]
        a = keep.hold(_carr(prov["sdt"], np.uint8))
        p.sdt = <const unsigned char*>_ptr(a)
        p.dmin = float(prov["dist_min"])
        p.delta = float(prov["delta"])
    return 0


cdef int _fill_graph(Graph* g, dict prov, int kind, cnp.ndarray levels,
                     cnp.ndarray base_blocks, cnp.ndarray uoff, cnp.ndarray upper_blocks,
                     int R, cnp.ndarray state) except -1:
    g.n = levels.shape[0]
    g.base_cap = 2 * R
    g.upper_cap = R
    g.mcode = (<object>prov["codes"]).shape[1] if kind == K_FLASH else 0
    g.base_stride = base_blocks.shape[1]
    g.upper_stride = upper_blocks.shape[1]
    g.base_codes_off = 4 + 4 * g.base_cap
    g.upper_codes_off = 4 + 4 * g.upper_cap
    g.base = <unsigned char*>_ptr(base_blocks)
    g.upper = <unsigned char*>_ptr(upper_blocks)
    g.levels = <const cnp.int32_t*>_ptr(levels)
    g.uoff = <const cnp.int64_t*>_ptr(uoff)
    g.state = <cnp.int32_t*>_ptr(state)
    return 0


cdef class _ScratchPool:
    """Per-thread work areas backed by numpy buffers."""

    cdef Scratch* s
    cdef int nthreads
    cdef object keep

    def __cinit__(self, int nthreads, int n, int width, int R, int m, int k,
                  int need_adc, int need_adt, int pair_cap):
        cdef int t
        self.nthreads = nthreads
        self.s = <Scratch*>malloc(nthreads * sizeof(Scratch))
        if self.s == NULL:
            raise MemoryError()
        memset(self.s, 0, nthreads * sizeof(Scratch))
        cdef int cap2 = 2 * R + 2
        cdef size_t npairs = (pair_cap if pair_cap > cap2 else cap2) + 2
        visited = np.zeros((nthreads, max(n, 1)), dtype=np.uint32)
        fr_d = np.zeros((nthreads, n + 2), dtype=np.float64)
        fr_id = np.zeros((nthreads, n + 2), dtype=np.int32)
        re_d = np.zeros((nthreads, width + 2), dtype=np.float64)
        re_id = np.zeros((nthreads, width + 2), dtype=np.int32)
        out_d = np.zeros((nthreads, width + 2), dtype=np.float64)
        out_id = np.zeros((nthreads, width + 2), dtype=np.int32)
        pairs = np.zeros((nthreads, 2 * npairs), dtype=np.float64)
        sel = np.zeros((nthreads, cap2), dtype=np.int32)
        rsel = np.zeros((nthreads, cap2), dtype=np.int32)
        cand_ids = np.zeros((nthreads, cap2), dtype=np.int32)
        cand_d = np.zeros((nthreads, cap2), dtype=np.float64)
        lanes = np.zeros((nthreads, ((cap2 + 15) // 16) * 16 + 64), dtype=np.uint8)
        adc = np.zeros((nthreads, max(m * k, 1)), dtype=np.float32) if need_adc else None
        adt = np.zeros((nthreads, max(m * 16, 1)), dtype=np.uint8) if need_adt else None
        qcode = np.zeros((nthreads, max(m, 1)), dtype=np.uint8)
        self.keep = [visited, fr_d, fr_id, re_d, re_id, out_d, out_id, pairs, sel,
                     rsel, cand_ids, cand_d, lanes, adc, adt, qcode]
        cdef cnp.ndarray arr
        for t in range(nthreads):
            arr = visited
            self.s[t].visited = (<unsigned int*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            self.s[t].epoch = 0
            arr = fr_d
            self.s[t].fr_d = (<double*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = fr_id
            self.s[t].fr_id = (<cnp.int32_t*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = re_d
            self.s[t].re_d = (<double*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = re_id
            self.s[t].re_id = (<cnp.int32_t*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = out_d
            self.s[t].out_d = (<double*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = out_id
            self.s[t].out_id = (<cnp.int32_t*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = pairs
            self.s[t].pairs = (<fa_pair*>_ptr(arr)) + (<size_t>t) * npairs
            arr = sel
            self.s[t].sel = (<cnp.int32_t*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = rsel
            self.s[t].rsel = (<cnp.int32_t*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = cand_ids
            self.s[t].cand_ids = (<cnp.int32_t*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = cand_d
            self.s[t].cand_d = (<double*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = lanes
            self.s[t].lanes = (<unsigned char*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            if adc is not None:
                arr = adc
                self.s[t].adc = (<float*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            if adt is not None:
                arr = adt
                self.s[t].adt = (<unsigned char*>_ptr(arr)) + (<size_t>t) * arr.shape[1]
            arr = qcode
            self.s[t].qcode = (<unsigned char*>_ptr(arr)) + (<size_t>t) * arr.shape[1]

    def counters(self):
        cdef long long cd = 0, cs = 0, ck = 0, cv = 0
        cdef int t
        for t in range(self.nthreads):
            cd += self.s[t].c_dist
            cs += self.s[t].c_sym
            ck += self.s[t].c_kernel
            cv += self.s[t].c_visited
        return {"dist_comps": int(cd), "sym_comps": int(cs),
                "kernel_calls": int(ck), "visited": int(cv)}

    def __dealloc__(self):
        if self.s != NULL:
            free(self.s)


def build_graph(int kind, dict prov, levels, base_blocks, upper_offsets, upper_blocks,
                int C, int R, int threads=1, int kernel=0):
    """Insert every vector into the shared block arrays; returns entry point,
    top layer, and aggregate counters."""
    keep = _Arrays()
    cdef cnp.ndarray lv = keep.hold(_carr(levels, np.int32))
    cdef cnp.ndarray bb = keep.hold(np.ascontiguousarray(base_blocks))
    cdef cnp.ndarray uo = keep.hold(_carr(upper_offsets, np.int64))
    cdef cnp.ndarray ub = keep.hold(np.ascontiguousarray(upper_blocks))
    cdef cnp.ndarray state = np.array([-1, -1], dtype=np.int32)
    cdef Prov p
    cdef Graph g
    _fill_prov(&p, kind, prov, kernel, keep)
    _fill_graph(&g, prov, kind, lv, bb, uo, ub, R, state)
    cdef int n = g.n
    if n == 0:
        return {"entry_point": -1, "max_layer": -1,
                "counters": {"dist_comps": 0, "sym_comps": 0, "kernel_calls": 0, "visited": 0}}

    cdef int nthreads = threads if threads > 0 else 1
    cdef _ScratchPool pool = _ScratchPool(
        nthreads, n, C, R, p.m, p.k,
        1 if kind == KIND_PQ else 0, 1 if kind == KIND_FLASH else 0, C + 2)
    cdef openmp.omp_lock_t* vlocks = <openmp.omp_lock_t*>malloc(n * sizeof(openmp.omp_lock_t))
    if vlocks == NULL:
        raise MemoryError()
    cdef openmp.omp_lock_t glock
    cdef int i
    for i in range(n):
        openmp.omp_init_lock(&vlocks[i])
    openmp.omp_init_lock(&glock)

    cdef int Cc = C
    cdef int Rc = R
    cdef Scratch* sarr = pool.s
    try:
        with nogil:
            insert_one(&p, &g, &sarr[0], vlocks, &glock, 0, Cc, Rc)
        if nthreads == 1:
            with nogil:
                for i in range(1, n):
                    insert_one(&p, &g, &sarr[0], vlocks, &glock, i, Cc, Rc)
        else:
            for i in prange(1, n, nogil=True, num_threads=nthreads,
                            schedule="dynamic", chunksize=64):
                insert_one(&p, &g, &sarr[openmp.omp_get_thread_num()],
                           vlocks, &glock, i, Cc, Rc)
    finally:
        for i in range(n):
            openmp.omp_destroy_lock(&vlocks[i])
        free(vlocks)
        openmp.omp_destroy_lock(&glock)
    return {"entry_point": int(state[0]), "max_layer": int(state[1]),
            "counters": pool.counters()}


cdef void _query_ctx(Prov* p, Scratch* s, const float* qvec, const float* qred,
                     const unsigned char* qcode_in, const float* qadc, QCtx* q) noexcept nogil:
    q.vec = qvec
    q.red = qred
    q.code = qcode_in
    q.adc = qadc
    q.adt = NULL
    if p.kind == K_PQ and q.adc == NULL:
        fa_pq_adc(qvec, p.cent, p.dims, p.offs, p.m, p.k, p.dmax, s.adc)
        q.adc = s.adc
    elif p.kind == K_FLASH:
        fa_flash_encode_adt(qred, p.cent, p.dims, p.offs, p.m, p.dmax,
                            p.dmin, p.delta, s.qcode, s.adt)
        q.adt = s.adt
        q.code = s.qcode


cdef void search_one(Prov* p, Graph* g, Scratch* s, QCtx* q, int ef, int k,
                     int rerank_depth, cnp.int64_t* out_ids, double* out_d) noexcept nogil:
    cdef int ep = g.state[0]
    cdef int ml = g.state[1]
    cdef int layer, nres, rr, j
    cdef double curd = asym_one(p, q, ep)
    s.c_dist += 1
    for layer in range(ml, 0, -1):
        hill_climb(p, q, g, s, layer, &ep, &curd)
    nres = search_layer(p, q, g, s, 0, ep, curd, ef)
    if rerank_depth > 0:
        rr = rerank_depth if rerank_depth < nres else nres
        for j in range(rr):
            s.pairs[j].d = fa_l2sq_f32(q.vec, p.vecs + (<size_t>s.out_id[j]) * p.dim, p.dim)
            s.pairs[j].id = s.out_id[j]
        fa_sort_pairs(s.pairs, rr)
        for j in range(k):
            if j < rr:
                out_ids[j] = s.pairs[j].id
                out_d[j] = s.pairs[j].d
            else:
                out_ids[j] = -1
                out_d[j] = INFINITY
    else:
        for j in range(k):
            if j < nres:
                out_ids[j] = s.out_id[j]
                out_d[j] = s.out_d[j]
            else:
                out_ids[j] = -1
                out_d[j] = INFINITY


def search_batch(int kind, dict prov, levels, base_blocks, upper_offsets, upper_blocks,
                 int C, int R, int entry, int max_layer, queries, qaux,
                 int ef, int k, int rerank_depth, int threads=1, int kernel=0):
    """Search many queries over a frozen graph; parallel over queries."""
    if entry < 0:
        raise ValueError("cannot search an empty graph")
    keep = _Arrays()
    cdef cnp.ndarray lv = keep.hold(_carr(levels, np.int32))
    cdef cnp.ndarray bb = keep.hold(np.ascontiguousarray(base_blocks))
    cdef cnp.ndarray uo = keep.hold(_carr(upper_offsets, np.int64))
    cdef cnp.ndarray ub = keep.hold(np.ascontiguousarray(upper_blocks))
    cdef cnp.ndarray state = np.array([entry, max_layer], dtype=np.int32)
    cdef cnp.ndarray qs = keep.hold(_carr(queries, np.float32))
    cdef Prov p
    cdef Graph g
    _fill_prov(&p, kind, prov, kernel, keep)
    _fill_graph(&g, prov, kind, lv, bb, uo, ub, R, state)

    cdef int nq = qs.shape[0]
    cdef int nthreads = threads if threads > 0 else 1
    cdef int width = ef if ef > k else k
    cdef _ScratchPool pool = _ScratchPool(
        nthreads, g.n, width, R, p.m, p.k,
        1 if kind == KIND_PQ else 0, 1 if kind == KIND_FLASH else 0, width + 2)

    cdef cnp.ndarray qarr
    cdef const float* qred_p = NULL
    cdef const unsigned char* qcode_p = NULL
    cdef const float* qadc_p = NULL
    cdef size_t qred_stride = 0, qcode_stride = 0, qadc_stride = 0
    if kind == KIND_PCA or kind == KIND_FLASH:
        qarr = keep.hold(_carr(qaux, np.float32))
        qred_p = <const float*>_ptr(qarr)
        qred_stride = qarr.shape[1]
    elif kind == KIND_SQ:
        qarr = keep.hold(_carr(qaux, np.uint8))
        qcode_p = <const unsigned char*>_ptr(qarr)
        qcode_stride = qarr.shape[1]
    elif kind == KIND_PQ and qaux is not None:
        qarr = keep.hold(_carr(qaux, np.float32))
        qadc_p = <const float*>_ptr(qarr)
        qadc_stride = qarr.shape[1] * qarr.shape[2]

    out_ids = np.full((nq, k), -1, dtype=np.int64)
    out_dists = np.full((nq, k), np.inf, dtype=np.float64)
    cdef cnp.ndarray oi = out_ids
    cdef cnp.ndarray od_arr = out_dists
    cdef cnp.int64_t* oid = <cnp.int64_t*>_ptr(oi)
    cdef double* od = <double*>_ptr(od_arr)
    cdef const float* qs_p = <const float*>_ptr(qs)
    cdef size_t dim = p.dim
    cdef Scratch* sarr = pool.s
    cdef int qi, tid
    if nthreads == 1:
        with nogil:
            for qi in range(nq):
                _query_ctx(&p, &sarr[0], qs_p + (<size_t>qi) * dim,
                           fptr_off(qred_p, <size_t>qi, qred_stride),
                           uptr_off(qcode_p, <size_t>qi, qcode_stride),
                           fptr_off(qadc_p, <size_t>qi, qadc_stride), &sarr[0].q)
                search_one(&p, &g, &sarr[0], &sarr[0].q, ef, k, rerank_depth,
                           oid + (<size_t>qi) * k, od + (<size_t>qi) * k)
    else:
        for qi in prange(nq, nogil=True, num_threads=nthreads, schedule="dynamic", chunksize=8):
            tid = openmp.omp_get_thread_num()
            _query_ctx(&p, &sarr[tid], qs_p + (<size_t>qi) * dim,
                       fptr_off(qred_p, <size_t>qi, qred_stride),
                       uptr_off(qcode_p, <size_t>qi, qcode_stride),
                       fptr_off(qadc_p, <size_t>qi, qadc_stride), &sarr[tid].q)
            search_one(&p, &g, &sarr[tid], &sarr[tid].q, ef, k, rerank_depth,
                       oid + (<size_t>qi) * k, od + (<size_t>qi) * k)
    return out_ids, out_dists, pool.counters()


def greedy_search_layer(int kind, dict prov, levels, base_blocks, upper_offsets,
                        upper_blocks, int C, int R, int entry, int width, int layer,
                        query, qaux=None, int kernel=0):
    """Single-layer candidate search exposed for tests: ([(id, dist)...], counters)."""
    keep = _Arrays()
    cdef cnp.ndarray lv = keep.hold(_carr(levels, np.int32))
    cdef cnp.ndarray bb = keep.hold(np.ascontiguousarray(base_blocks))
    cdef cnp.ndarray uo = keep.hold(_carr(upper_offsets, np.int64))
    cdef cnp.ndarray ub = keep.hold(np.ascontiguousarray(upper_blocks))
    cdef cnp.ndarray state = np.array([entry, 0], dtype=np.int32)
    cdef Prov p
    cdef Graph g
    _fill_prov(&p, kind, prov, kernel, keep)
    _fill_graph(&g, prov, kind, lv, bb, uo, ub, R, state)
    cdef cnp.ndarray qv = keep.hold(_carr(np.atleast_2d(query), np.float32))
    cdef _ScratchPool pool = _ScratchPool(
        1, g.n, width + 2, R, p.m, p.k,
        1 if kind == KIND_PQ else 0, 1 if kind == KIND_FLASH else 0, width + 2)
    cdef QCtx q
    cdef cnp.ndarray qa
    cdef const float* aux_red = NULL
    cdef const unsigned char* aux_code = NULL
    cdef const float* aux_adc = NULL
    if qaux is not None:
        if kind == KIND_PCA or kind == KIND_FLASH:
            qa = keep.hold(_carr(np.atleast_2d(qaux), np.float32))
            aux_red = <const float*>_ptr(qa)
        elif kind == KIND_SQ:
            qa = keep.hold(_carr(np.atleast_2d(qaux), np.uint8))
            aux_code = <const unsigned char*>_ptr(qa)
        elif kind == KIND_PQ:
            qa = keep.hold(_carr(qaux, np.float32))
            aux_adc = <const float*>_ptr(qa)
    elif kind in (KIND_SQ, KIND_PCA, KIND_FLASH):
        raise ValueError("this strategy requires a prepared query payload (qaux)")
    cdef Scratch* s = pool.s
    cdef int nres
    cdef int w = width
    cdef int ent = entry
    cdef int lay = layer
    cdef double entry_d
    cdef const float* qv_p = <const float*>_ptr(qv)
    with nogil:
        _query_ctx(&p, &s[0], qv_p, aux_red, aux_code, aux_adc, &q)
        entry_d = asym_one(&p, &q, ent)
        s[0].c_dist += 1
        nres = search_layer(&p, &q, &g, &s[0], lay, ent, entry_d, w)
    out = [(int(s[0].out_id[j]), float(s[0].out_d[j])) for j in range(nres)]
    return out, pool.counters()


def select_neighbors(int kind, dict prov, cand_ids, cand_dists, int cap):
    """Diversity pruning exposed for tests; candidates must be sorted ascending."""
    keep = _Arrays()
    cdef Prov p
    _fill_prov(&p, kind, prov, 0, keep)
    cdef cnp.ndarray ci = _carr(cand_ids, np.int32)
    cdef cnp.ndarray cd = _carr(cand_dists, np.float64)
    cdef int n = ci.shape[0]
    out = np.empty(max(n, 1), dtype=np.int32)
    cdef cnp.ndarray o = out
    cdef _ScratchPool pool = _ScratchPool(1, 1, 2, 2, p.m, p.k, 0, 0, 4)
    cdef int nk
    cdef double* cd_p = <double*>_ptr(cd)
    cdef cnp.int32_t* ci_p = <cnp.int32_t*>_ptr(ci)
    cdef cnp.int32_t* o_p = <cnp.int32_t*>_ptr(o)
    with nogil:
        nk = select_heur(&p, &pool.s[0], cd_p, ci_p, n, cap, o_p)
    return [int(x) for x in out[:nk]]


# ---------------------------------------------------------------------------
# kernel-level entry points for tests and benchmarks

def flash_batch_distance(adt, codes, int kernel=0):
    """One 16-slot batch: adt (M,16) u8, codes (M,16) u8 -> u8[16]."""
    cdef cnp.ndarray a = _carr(adt, np.uint8)
    cdef cnp.ndarray c = _carr(codes, np.uint8)
    cdef int m = a.shape[0]
    out = np.empty(16, dtype=np.uint8)
    cdef cnp.ndarray o = out
    fa_batch_lanes(<const unsigned char*>_ptr(a), <const unsigned char*>_ptr(c),
                   m, 1, kernel, <unsigned char*>_ptr(o))
    return out


def flash_batch_distance_many(adts, codes, int kernel=0):
    """Vectorized over cases: adts (N,M,16), codes (N,M,16) -> (N,16) u8."""
    cdef cnp.ndarray a = _carr(adts, np.uint8)
    cdef cnp.ndarray c = _carr(codes, np.uint8)
    cdef int n = a.shape[0]
    cdef int m = a.shape[1]
    out = np.empty((n, 16), dtype=np.uint8)
    cdef cnp.ndarray o = out
    cdef const unsigned char* ap = <const unsigned char*>_ptr(a)
    cdef const unsigned char* cp = <const unsigned char*>_ptr(c)
    cdef unsigned char* op = <unsigned char*>_ptr(o)
    cdef size_t stride = (<size_t>m) * 16
    cdef int i
    cdef int kk = kernel
    with nogil:
        for i in range(n):
            fa_batch_lanes(ap + i * stride, cp + i * stride, m, 1, kk, op + (<size_t>i) * 16)
    return out


def flash_batch_blocks(adt, codes_flat, int nb, int kernel=0):
    """Consecutive batches as laid out in a vertex block: codes_flat (nb*M*16,) u8."""
    cdef cnp.ndarray a = _carr(adt, np.uint8)
    cdef cnp.ndarray c = _carr(codes_flat, np.uint8)
    cdef int m = a.shape[0]
    out = np.empty(nb * 16, dtype=np.uint8)
    cdef cnp.ndarray o = out
    fa_batch_lanes(<const unsigned char*>_ptr(a), <const unsigned char*>_ptr(c),
                   m, nb, kernel, <unsigned char*>_ptr(o))
    return out


def flash_sdt_distance(sdt, code_a, code_b):
    cdef cnp.ndarray s = _carr(sdt, np.uint8)
    cdef cnp.ndarray ca = _carr(code_a, np.uint8)
    cdef cnp.ndarray cb = _carr(code_b, np.uint8)
    return int(fa_sdt_sum_sat(<const unsigned char*>_ptr(s), <const unsigned char*>_ptr(ca),
                              <const unsigned char*>_ptr(cb), s.shape[0]))


def flash_encode_adt(cent, dims, offs, double dist_min, double delta, reduced):
    cdef cnp.ndarray ct = _carr(cent, np.float32)
    cdef cnp.ndarray dm = _carr(dims, np.int32)
    cdef cnp.ndarray of = _carr(offs, np.int32)
    cdef cnp.ndarray rd = _carr(reduced, np.float32)
    cdef int m = ct.shape[0]
    code = np.empty(m, dtype=np.uint8)
    adt = np.empty((m, 16), dtype=np.uint8)
    cdef cnp.ndarray co = code
    cdef cnp.ndarray ad = adt
    fa_flash_encode_adt(<const float*>_ptr(rd), <const float*>_ptr(ct),
                        <const cnp.int32_t*>_ptr(dm), <const cnp.int32_t*>_ptr(of),
                        m, ct.shape[2], dist_min, delta,
                        <unsigned char*>_ptr(co), <unsigned char*>_ptr(ad))
    return code, adt


def quantize_distance(dist, double dist_min, double delta):
    d = np.atleast_1d(np.asarray(dist, dtype=np.float64))
    cdef cnp.ndarray dd = np.ascontiguousarray(d)
    out = np.empty(dd.shape[0], dtype=np.uint8)
    cdef cnp.ndarray o = out
    cdef double* dp = <double*>_ptr(dd)
    cdef unsigned char* op = <unsigned char*>_ptr(o)
    cdef int i
    cdef int n = dd.shape[0]
    with nogil:
        for i in range(n):
            op[i] = fa_quantize(dp[i], dist_min, delta)
    return out if np.ndim(dist) else out[0]


def l2sq_f32(a, b):
    """Squared distance with the core's float accumulation (test hook)."""
    cdef cnp.ndarray x = _carr(a, np.float32)
    cdef cnp.ndarray y = _carr(b, np.float32)
    return float(fa_l2sq_f32(<const float*>_ptr(x), <const float*>_ptr(y), x.shape[0]))
