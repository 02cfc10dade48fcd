#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <vector>

#include "mrfuzz/executor.hpp"
#include "mrfuzz/rng.hpp"

namespace mrfuzz {

struct QueueEntry {
    uint64_t id = 0;
    std::vector<uint8_t> input;
    uint64_t map_digest = 0;       // fnv over the classified map
    std::vector<uint32_t> edges;   // nonzero classified cells
    bool favored = false;
    uint64_t instructions = 0;     // deterministic cost, drives favoritism
    std::chrono::nanoseconds exec_time{0};

    size_t len() const { return input.size(); }
};

// Directory-backed corpus shared between workers:
//   queue/id-<n>.bin            one file per interesting input
//   crashes/crash-<key>-<n>.bin first input per dedup key
//   hangs/hang-<n>.bin          first input per hang digest
//   global.map                  OR of all classified maps seen
//   index.jsonl                 one metadata record per queue entry
//
// Commits go through write-temp-then-rename, so readers never observe a
// half-written file. add_* re-reads and merges the on-disk index first, which
// keeps concurrent workers convergent (the global map only ever grows;
// metadata is last-writer-wins).
class CorpusStore {
public:
    CorpusStore(std::filesystem::path dir, size_t map_size);

    // True (and committed) iff the classified map sets a bucket the global
    // map has not seen. The outcome's instruction count feeds favoritism.
    bool add_if_interesting(std::span<const uint8_t> input,
                            std::span<const uint8_t> classified,
                            uint64_t instructions,
                            std::chrono::nanoseconds exec_time);
    bool add_if_interesting(std::span<const uint8_t> input, const RunOutcome& o,
                            const CoverageMap& run_map);

    // First input per dedup key is kept; true if the key was new.
    bool add_crash(std::span<const uint8_t> input, uint64_t dedup_key);
    // Deduped by input digest; true if stored.
    bool add_hang(std::span<const uint8_t> input);

    // Favored entries win with probability 0.8; the rest of the time the
    // whole queue is drawn from uniformly. Throws EmptyCorpus.
    const QueueEntry& pick_next(Xoshiro256ss& rng);

    // Merge the on-disk index written by other workers into this one.
    void refresh();

    size_t size() const { return m_entries.size(); }
    const std::vector<QueueEntry>& entries() const { return m_entries; }
    std::span<const uint8_t> global_map() const { return m_seen; }
    size_t unique_crashes() const { return m_crash_keys.size(); }
    size_t unique_hangs() const { return m_hang_digests.size(); }
    const std::filesystem::path& dir() const { return m_dir; }

    // Recomputes lazily: the smallest (len x instructions) entry covering
    // each seen cell, ties to the older entry.
    size_t favored_count();

private:
    void cull();
    void commit_entry(const QueueEntry& e);
    void write_index() const;
    void merge_index_file();

    std::filesystem::path m_dir;
    size_t m_map_size;
    std::vector<QueueEntry> m_entries;  // ascending id
    std::vector<uint8_t> m_seen;
    std::set<uint64_t> m_crash_keys;
    std::set<uint64_t> m_hang_digests;
    uint64_t m_crash_seq = 0;
    uint64_t m_hang_seq = 0;
    bool m_cull_dirty = true;
};

// Greedy cover: for every (cell, bucket) pair reached by any input, the
// smallest input reaching it survives. The classified edge union of the
// result equals that of the full set.
std::vector<std::vector<uint8_t>> cmin(Campaign& c,
                                       const std::vector<std::vector<uint8_t>>& inputs);

enum class TminMode : uint8_t { Coverage, Crash };

// Shrink an input while preserving its behavior: descending power-of-two
// block removal to a size-1 fixpoint, then 0x41 byte normalization. Coverage
// mode preserves the classified map byte for byte; crash mode preserves the
// crash dedup key (throws NotCrashing if the input does not crash).
std::vector<uint8_t> tmin(Campaign& c, std::span<const uint8_t> input, TminMode mode);

}  // namespace mrfuzz
