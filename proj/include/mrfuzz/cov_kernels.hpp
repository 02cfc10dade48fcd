#pragma once

#include <cstddef>
#include <cstdint>

// Byte-array kernels behind the coverage map: hit-count bucketing, map merge,
// new-coverage scan, nonzero counting. Each has a scalar reference
// implementation and an AVX2 variant; the public entry points dispatch once at
// startup based on CPUID. Tests drive both backends directly and assert
// bit-exact equivalence on every size class (including tails shorter than a
// vector).
namespace mrfuzz::kernels {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
// Force a backend (tests / troubleshooting). Selecting Avx2 on a machine
// without AVX2 falls back to scalar.
void force_backend(Backend b);
bool avx2_supported();

// dst[i] = bucket(src[i])
void classify(uint8_t* dst, const uint8_t* src, size_t n);
// dst[i] = max(dst[i], src[i])
void merge_max(uint8_t* dst, const uint8_t* src, size_t n);
// dst[i] |= src[i]  (accumulating one-hot bucket sets)
void merge_or(uint8_t* dst, const uint8_t* src, size_t n);
// number of nonzero bytes
size_t count_nonzero(const uint8_t* p, size_t n);
// true iff any classified[i] has a bit not present in seen[i]
bool any_new_bits(const uint8_t* seen, const uint8_t* classified, size_t n);

// The 256-entry bucket table (shared by both backends).
const uint8_t* bucket_table();

namespace scalar {
void classify(uint8_t* dst, const uint8_t* src, size_t n);
void merge_max(uint8_t* dst, const uint8_t* src, size_t n);
void merge_or(uint8_t* dst, const uint8_t* src, size_t n);
size_t count_nonzero(const uint8_t* p, size_t n);
bool any_new_bits(const uint8_t* seen, const uint8_t* classified, size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void classify(uint8_t* dst, const uint8_t* src, size_t n);
void merge_max(uint8_t* dst, const uint8_t* src, size_t n);
void merge_or(uint8_t* dst, const uint8_t* src, size_t n);
size_t count_nonzero(const uint8_t* p, size_t n);
bool any_new_bits(const uint8_t* seen, const uint8_t* classified, size_t n);
}  // namespace avx2
#endif

}  // namespace mrfuzz::kernels
