#include "mrfuzz/coverage.hpp"

namespace mrfuzz {

std::vector<uint32_t> map_diff(std::span<const uint8_t> a, std::span<const uint8_t> b) {
    if (a.size() != b.size())
        throw Error(Err::SizeMismatch, "cannot diff maps of different sizes");
    const uint8_t* table = kernels::bucket_table();
    std::vector<uint32_t> out;
    for (size_t i = 0; i < a.size(); ++i)
        if (table[a[i]] != table[b[i]]) out.push_back(static_cast<uint32_t>(i));
    return out;
}

bool accumulate_new_bits(std::span<uint8_t> seen, std::span<const uint8_t> classified) {
    if (seen.size() != classified.size())
        throw Error(Err::SizeMismatch, "seen-map size mismatch");
    bool fresh = false;
    for (size_t i = 0; i < seen.size(); ++i) {
        uint8_t nb = static_cast<uint8_t>(classified[i] & ~seen[i]);
        if (nb) {
            seen[i] |= nb;
            fresh = true;
        }
    }
    return fresh;
}

}  // namespace mrfuzz
