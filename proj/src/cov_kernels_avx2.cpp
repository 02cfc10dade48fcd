#include "mrfuzz/cov_kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace mrfuzz::kernels::avx2 {

// Bucketing as threshold accumulation: each unsigned-compare v >= t
// contributes the delta between consecutive bucket values, summing to the
// bucket of v. Deltas: >=1:+1 >=2:+1 >=3:+2 >=4:+4 >=8:+8 >=16:+16 >=32:+32
// >=128:+64 (total 128 for the top bucket).
static inline __m256i ge_mask(__m256i v, uint8_t k) {
    const __m256i kv = _mm256_set1_epi8(static_cast<char>(k));
    return _mm256_cmpeq_epi8(_mm256_max_epu8(v, kv), v);
}

void classify(uint8_t* dst, const uint8_t* src, size_t n) {
    static constexpr uint8_t kThresh[8] = {1, 2, 3, 4, 8, 16, 32, 128};
    static constexpr uint8_t kDelta[8] = {1, 1, 2, 4, 8, 16, 32, 64};
    size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
        __m256i acc = _mm256_setzero_si256();
        for (int t = 0; t < 8; ++t) {
            __m256i m = ge_mask(v, kThresh[t]);
            acc = _mm256_add_epi8(
                acc, _mm256_and_si256(m, _mm256_set1_epi8(static_cast<char>(kDelta[t]))));
        }
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), acc);
    }
    if (i < n) scalar::classify(dst + i, src + i, n - i);
}

void merge_max(uint8_t* dst, const uint8_t* src, size_t n) {
    size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i));
        __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), _mm256_max_epu8(a, b));
    }
    if (i < n) scalar::merge_max(dst + i, src + i, n - i);
}

void merge_or(uint8_t* dst, const uint8_t* src, size_t n) {
    size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i));
        __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), _mm256_or_si256(a, b));
    }
    if (i < n) scalar::merge_or(dst + i, src + i, n - i);
}

size_t count_nonzero(const uint8_t* p, size_t n) {
    size_t c = 0;
    size_t i = 0;
    const __m256i zero = _mm256_setzero_si256();
    for (; i + 32 <= n; i += 32) {
        __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p + i));
        uint32_t zeros = static_cast<uint32_t>(
            _mm256_movemask_epi8(_mm256_cmpeq_epi8(v, zero)));
        c += 32 - static_cast<size_t>(__builtin_popcount(zeros));
    }
    if (i < n) c += scalar::count_nonzero(p + i, n - i);
    return c;
}

bool any_new_bits(const uint8_t* seen, const uint8_t* classified, size_t n) {
    size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        __m256i s = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(seen + i));
        __m256i c = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(classified + i));
        __m256i nw = _mm256_andnot_si256(s, c);
        if (!_mm256_testz_si256(nw, nw)) return true;
    }
    if (i < n) return scalar::any_new_bits(seen + i, classified + i, n - i);
    return false;
}

}  // namespace mrfuzz::kernels::avx2

#endif  // x86_64
