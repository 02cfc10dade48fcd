#include "mrfuzz/cov_kernels.hpp"

namespace mrfuzz::kernels {

#if defined(__x86_64__) || defined(_M_X64)
bool avx2_supported() { return __builtin_cpu_supports("avx2") != 0; }
#else
bool avx2_supported() { return false; }
#endif

namespace {
Backend g_backend = avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

Backend active_backend() { return g_backend; }

void force_backend(Backend b) {
    g_backend = (b == Backend::Avx2 && avx2_supported()) ? Backend::Avx2 : Backend::Scalar;
}

#if defined(__x86_64__) || defined(_M_X64)
#define DISPATCH(fn, ...) \
    return g_backend == Backend::Avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__)
#else
#define DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

void classify(uint8_t* dst, const uint8_t* src, size_t n) { DISPATCH(classify, dst, src, n); }
void merge_max(uint8_t* dst, const uint8_t* src, size_t n) { DISPATCH(merge_max, dst, src, n); }
void merge_or(uint8_t* dst, const uint8_t* src, size_t n) { DISPATCH(merge_or, dst, src, n); }
size_t count_nonzero(const uint8_t* p, size_t n) { DISPATCH(count_nonzero, p, n); }
bool any_new_bits(const uint8_t* seen, const uint8_t* classified, size_t n) {
    DISPATCH(any_new_bits, seen, classified, n);
}

#undef DISPATCH

}  // namespace mrfuzz::kernels
