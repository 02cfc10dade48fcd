#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

#include "mrfuzz/corpus.hpp"
#include "mrfuzz/mutator.hpp"

namespace mrfuzz {

// The loop stops at whichever limit falls first. A zero exec budget means
// zero runs, not "unlimited".
struct FuzzBudget {
    uint64_t max_execs = std::numeric_limits<uint64_t>::max();
    double max_seconds = std::numeric_limits<double>::infinity();
};

struct FuzzStats {
    uint64_t execs = 0;
    double elapsed_seconds = 0.0;
    double execs_per_sec = 0.0;
    size_t paths = 0;
    size_t crashes = 0;
    size_t hangs = 0;
};

// Stable key=value lines: execs, execs_per_sec, paths, crashes, hangs.
std::string format_status(const FuzzStats& s);

// The generation loop: pick a queue entry (occasionally splicing in a second
// one), havoc it, run it, feed interesting inputs back into the store, and
// file crashes/hangs deduped. The store must hold at least one seed. When
// status_path is nonempty the stats land there as a key=value file roughly
// once a second, plus once at the end.
//
// All randomness flows through rng; with the mutator wired to the same rng,
// an exec-count budget replays identically for a fixed seed.
FuzzStats fuzz(Campaign& c, CorpusStore& store, Mutator& mut, Xoshiro256ss& rng,
               const FuzzBudget& budget, const std::filesystem::path& status_path = {});

}  // namespace mrfuzz
