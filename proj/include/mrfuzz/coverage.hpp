#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mrfuzz/cov_kernels.hpp"
#include "mrfuzz/util.hpp"

namespace mrfuzz {

constexpr size_t kDefaultMapSize = 65536;

// Edge-coverage byte map in the AFL style: the executor hashes each block
// start into a location, consecutive locations XOR into a map index, hit
// counters saturate at 255 and get bucketed before comparison.
class CoverageMap {
public:
    explicit CoverageMap(size_t map_size = kDefaultMapSize)
        : m_map(map_size, 0), m_mask(static_cast<uint32_t>(map_size - 1)) {
        if (map_size == 0 || !std::has_single_bit(map_size))
            throw Error(Err::SizeMismatch, "map size must be a power of two");
    }

    size_t size() const { return m_map.size(); }

    uint32_t loc_hash(uint32_t pc) const {
        return ((pc >> 4) ^ (pc << 8)) & m_mask;
    }

    // Edges must not leak across test cases.
    void begin_run() { m_prev_loc = 0; }

    void clear() {
        std::fill(m_map.begin(), m_map.end(), 0);
        m_prev_loc = 0;
    }

    void record_edge(uint32_t cur_loc) {
        uint8_t& cell = m_map[(cur_loc ^ m_prev_loc) & m_mask];
        if (cell != 0xff) ++cell;
        m_prev_loc = cur_loc >> 1;
    }

    void record_block(uint32_t pc) { record_edge(loc_hash(pc)); }

    uint32_t prev_loc() const { return m_prev_loc; }

    const uint8_t* data() const { return m_map.data(); }
    uint8_t* data() { return m_map.data(); }
    std::span<const uint8_t> bytes() const { return m_map; }

    void classify_into(std::span<uint8_t> out) const {
        if (out.size() != m_map.size())
            throw Error(Err::SizeMismatch, "classified buffer size mismatch");
        kernels::classify(out.data(), m_map.data(), m_map.size());
    }

    std::vector<uint8_t> classified() const {
        std::vector<uint8_t> out(m_map.size());
        classify_into(out);
        return out;
    }

    std::vector<uint32_t> edge_set() const {
        std::vector<uint32_t> out;
        for (uint32_t i = 0; i < m_map.size(); ++i)
            if (m_map[i]) out.push_back(i);
        return out;
    }

    size_t edge_count() const { return kernels::count_nonzero(m_map.data(), m_map.size()); }

    // Per-cell maximum; associative and commutative, used for aggregation.
    void merge_from(const CoverageMap& other) {
        if (other.size() != size())
            throw Error(Err::SizeMismatch, "cannot merge maps of different sizes");
        kernels::merge_max(m_map.data(), other.m_map.data(), m_map.size());
    }

    void save(const std::filesystem::path& p) const { write_file(p, m_map); }

    static CoverageMap load(const std::filesystem::path& p) {
        std::vector<uint8_t> bytes = read_file(p);
        if (bytes.empty() || !std::has_single_bit(bytes.size()))
            throw Error(Err::SizeMismatch, "map file size must be a power of two");
        CoverageMap m(bytes.size());
        m.m_map = std::move(bytes);
        return m;
    }

private:
    std::vector<uint8_t> m_map;
    uint32_t m_mask;
    uint32_t m_prev_loc = 0;
};

// Indices where the classified buckets of two raw maps differ.
std::vector<uint32_t> map_diff(std::span<const uint8_t> a, std::span<const uint8_t> b);

// OR one run's classified buckets into an accumulated seen-map. True when at
// least one previously unseen bit was set — the new-coverage signal shared by
// the campaign loop and the corpus store.
bool accumulate_new_bits(std::span<uint8_t> seen, std::span<const uint8_t> classified);

}  // namespace mrfuzz
