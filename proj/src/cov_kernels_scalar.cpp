#include "mrfuzz/cov_kernels.hpp"

namespace mrfuzz::kernels {

// Hit-count buckets: 0, 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128-255 map to
// 0, 1, 2, 4, 8, 16, 32, 64, 128.
static constexpr uint8_t bucket_of(unsigned v) {
    if (v == 0) return 0;
    if (v == 1) return 1;
    if (v == 2) return 2;
    if (v == 3) return 4;
    if (v <= 7) return 8;
    if (v <= 15) return 16;
    if (v <= 31) return 32;
    if (v <= 127) return 64;
    return 128;
}

struct BucketTable {
    uint8_t v[256];
};

static constexpr BucketTable make_bucket_table() {
    BucketTable t{};
    for (unsigned i = 0; i < 256; ++i) t.v[i] = bucket_of(i);
    return t;
}

static constexpr BucketTable kTable = make_bucket_table();

const uint8_t* bucket_table() { return kTable.v; }

namespace scalar {

void classify(uint8_t* dst, const uint8_t* src, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = kTable.v[src[i]];
}

void merge_max(uint8_t* dst, const uint8_t* src, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (src[i] > dst[i]) dst[i] = src[i];
}

void merge_or(uint8_t* dst, const uint8_t* src, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] |= src[i];
}

size_t count_nonzero(const uint8_t* p, size_t n) {
    size_t c = 0;
    for (size_t i = 0; i < n; ++i) c += p[i] != 0;
    return c;
}

bool any_new_bits(const uint8_t* seen, const uint8_t* classified, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (classified[i] & ~seen[i]) return true;
    return false;
}

}  // namespace scalar
}  // namespace mrfuzz::kernels
