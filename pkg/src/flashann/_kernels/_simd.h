/* Hot distance kernels shared by the Cython core.
 *
 * The batch kernels compute 16 query-to-neighbor distances per step by using
 * a 16-byte codeword group as the shuffle index into a register-resident
 * 16-byte quantized distance table, accumulating with saturating unsigned
 * 8-bit adds.  The scalar form is the semantic definition; every vector width
 * must return identical bytes.
 */
#ifndef FLASHANN_SIMD_H
#define FLASHANN_SIMD_H

#include <math.h>
#include <stdint.h>
#include <stdlib.h>

#if defined(__SSSE3__) || defined(__AVX2__) || defined(__AVX512BW__)
#include <immintrin.h>
#endif

#if defined(__SSSE3__)
#define FA_HAVE_V128 1
#else
#define FA_HAVE_V128 0
#endif
#if defined(__AVX2__)
#define FA_HAVE_V256 1
#else
#define FA_HAVE_V256 0
#endif
#if defined(__AVX512BW__)
#define FA_HAVE_V512 1
#else
#define FA_HAVE_V512 0
#endif

/* Neighbor-list commit point: writers publish the live count last. */
static inline void fa_store_count(int32_t *p, int32_t v) {
    __atomic_store_n(p, v, __ATOMIC_RELEASE);
}
static inline int32_t fa_load_count(const int32_t *p) {
    return __atomic_load_n(p, __ATOMIC_ACQUIRE);
}

static inline double fa_l2sq_f32(const float *restrict a, const float *restrict b, int d) {
    float s = 0.0f;
    for (int i = 0; i < d; ++i) {
        float t = a[i] - b[i];
        s += t * t;
    }
    return (double)s;
}

static inline double fa_l2sq_u8(const uint8_t *restrict a, const uint8_t *restrict b, int d) {
    int32_t s = 0;
    for (int i = 0; i < d; ++i) {
        int32_t t = (int32_t)a[i] - (int32_t)b[i];
        s += t * t;
    }
    return (double)s;
}

/* Asymmetric table scan: one float lookup per subspace. */
static inline double fa_adc_sum(const float *adc, const uint8_t *code, int m, int k) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += adc[(size_t)i * k + code[i]];
    return s;
}

/* Centroid-pair table scan. */
static inline double fa_sdc_sum(const float *sdc, const uint8_t *ca, const uint8_t *cb,
                                int m, int k) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += sdc[((size_t)i * k + ca[i]) * k + cb[i]];
    return s;
}

/* Saturating 8-bit table sums (quantized tables). */
static inline double fa_adt_sum_sat(const uint8_t *adt, const uint8_t *code, int m) {
    uint32_t acc = 0;
    for (int i = 0; i < m; ++i) {
        acc += adt[i * 16 + code[i]];
        if (acc > 255u) acc = 255u;
    }
    return (double)acc;
}

static inline double fa_sdt_sum_sat(const uint8_t *sdt, const uint8_t *ca, const uint8_t *cb,
                                    int m) {
    uint32_t acc = 0;
    for (int i = 0; i < m; ++i) {
        acc += sdt[((size_t)i * 16 + ca[i]) * 16 + cb[i]];
        if (acc > 255u) acc = 255u;
    }
    return (double)acc;
}

/* 8-bit distance grid: 0 at dmin, 255 at the top of the range, floor between.
 * Inputs at or above the range top map to 255 exactly. */
static inline uint8_t fa_quantize(double d, double dmin, double delta) {
    double dmax = dmin + delta;
    if (d >= dmax) return 255;
    if (d < dmin) d = dmin;
    double t = floor((d - dmin) / delta * 255.0);
    if (t >= 255.0) return 255;
    if (t <= 0.0) return 0;
    return (uint8_t)t;
}

/* ---- batch lookup kernels ------------------------------------------------ */

static inline void fa_batch_scalar(const uint8_t *adt, const uint8_t *codes, int m,
                                   uint8_t *out) {
    for (int lane = 0; lane < 16; ++lane) {
        uint32_t acc = 0;
        for (int i = 0; i < m; ++i) {
            acc += adt[i * 16 + codes[i * 16 + lane]];
            if (acc > 255u) acc = 255u;
        }
        out[lane] = (uint8_t)acc;
    }
}

#if FA_HAVE_V128
static inline void fa_batch_v128(const uint8_t *adt, const uint8_t *codes, int m,
                                 uint8_t *out) {
    __m128i acc = _mm_setzero_si128();
    for (int i = 0; i < m; ++i) {
        __m128i tab = _mm_loadu_si128((const __m128i *)(adt + (size_t)i * 16));
        __m128i idx = _mm_loadu_si128((const __m128i *)(codes + (size_t)i * 16));
        acc = _mm_adds_epu8(acc, _mm_shuffle_epi8(tab, idx));
    }
    _mm_storeu_si128((__m128i *)out, acc);
}
#endif

#if FA_HAVE_V256
/* Two consecutive 16-slot batches per step: the 128-bit shuffle semantics of
 * the 256-bit op act independently per half, matching two scalar batches. */
static inline void fa_batch_v256(const uint8_t *adt, const uint8_t *codes, int m,
                                 uint8_t *out) {
    const size_t bstride = (size_t)m * 16;
    __m256i acc = _mm256_setzero_si256();
    for (int i = 0; i < m; ++i) {
        __m256i tab = _mm256_broadcastsi128_si256(
            _mm_loadu_si128((const __m128i *)(adt + (size_t)i * 16)));
        __m256i idx = _mm256_set_m128i(
            _mm_loadu_si128((const __m128i *)(codes + bstride + (size_t)i * 16)),
            _mm_loadu_si128((const __m128i *)(codes + (size_t)i * 16)));
        acc = _mm256_adds_epu8(acc, _mm256_shuffle_epi8(tab, idx));
    }
    _mm256_storeu_si256((__m256i *)out, acc);
}
#endif

#if FA_HAVE_V512
/* Four consecutive 16-slot batches per step. */
static inline void fa_batch_v512(const uint8_t *adt, const uint8_t *codes, int m,
                                 uint8_t *out) {
    const size_t bstride = (size_t)m * 16;
    __m512i acc = _mm512_setzero_si512();
    for (int i = 0; i < m; ++i) {
        __m512i tab = _mm512_broadcast_i32x4(
            _mm_loadu_si128((const __m128i *)(adt + (size_t)i * 16)));
        __m128i i0 = _mm_loadu_si128((const __m128i *)(codes + (size_t)i * 16));
        __m128i i1 = _mm_loadu_si128((const __m128i *)(codes + bstride + (size_t)i * 16));
        __m128i i2 = _mm_loadu_si128((const __m128i *)(codes + 2 * bstride + (size_t)i * 16));
        __m128i i3 = _mm_loadu_si128((const __m128i *)(codes + 3 * bstride + (size_t)i * 16));
        __m512i idx = _mm512_inserti32x4(
            _mm512_inserti32x4(
                _mm512_inserti32x4(_mm512_castsi128_si512(i0), i1, 1), i2, 2),
            i3, 3);
        acc = _mm512_adds_epu8(acc, _mm512_shuffle_epi8(tab, idx));
    }
    _mm512_storeu_si512((void *)out, acc);
}
#endif

/* Dispatch over nb consecutive batches; widths group multiple batches per op
 * and fall back to narrower forms for the remainder. */
static inline void fa_batch_lanes(const uint8_t *adt, const uint8_t *codes, int m, int nb,
                                  int kernel, uint8_t *out) {
    const size_t bstride = (size_t)m * 16;
    int b = 0;
#if FA_HAVE_V512
    if (kernel >= 3)
        for (; b + 4 <= nb; b += 4) fa_batch_v512(adt, codes + b * bstride, m, out + b * 16);
#endif
#if FA_HAVE_V256
    if (kernel >= 2)
        for (; b + 2 <= nb; b += 2) fa_batch_v256(adt, codes + b * bstride, m, out + b * 16);
#endif
#if FA_HAVE_V128
    if (kernel >= 1)
        for (; b < nb; ++b) fa_batch_v128(adt, codes + b * bstride, m, out + b * 16);
#endif
    for (; b < nb; ++b) fa_batch_scalar(adt, codes + b * bstride, m, out + b * 16);
}

/* ---- per-insertion query preparation ------------------------------------- */

static inline void fa_pq_adc(const float *vec, const float *cent, const int32_t *dims,
                             const int32_t *offs, int m, int k, int dmax, float *out) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
            out[(size_t)i * k + j] =
                (float)fa_l2sq_f32(vec + offs[i], cent + ((size_t)i * k + j) * dmax, dims[i]);
}

/* Codewords and quantized query table from a single pass of the
 * subvector-to-centroid distances; argmin ties keep the lowest index. */
static inline void fa_flash_encode_adt(const float *red, const float *cent,
                                       const int32_t *dims, const int32_t *offs, int m,
                                       int dmax, double dmin, double delta,
                                       uint8_t *code_out, uint8_t *adt_out) {
    for (int i = 0; i < m; ++i) {
        int best = 0;
        double bestd = INFINITY;
        for (int j = 0; j < 16; ++j) {
            double d = fa_l2sq_f32(red + offs[i], cent + ((size_t)i * 16 + j) * dmax, dims[i]);
            adt_out[i * 16 + j] = fa_quantize(d, dmin, delta);
            if (d < bestd) {
                bestd = d;
                best = j;
            }
        }
        code_out[i] = (uint8_t)best;
    }
}

/* ---- (distance, id) ordering --------------------------------------------- */

typedef struct {
    double d;
    int32_t id;
} fa_pair;

static int fa_pair_cmp(const void *a, const void *b) {
    const fa_pair *x = (const fa_pair *)a;
    const fa_pair *y = (const fa_pair *)b;
    if (x->d < y->d) return -1;
    if (x->d > y->d) return 1;
    return (x->id > y->id) - (x->id < y->id);
}

static inline void fa_sort_pairs(fa_pair *p, int n) {
    qsort(p, (size_t)n, sizeof(fa_pair), fa_pair_cmp);
}

#endif /* FLASHANN_SIMD_H */
