#include "mrfuzz/fuzz.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "mrfuzz/util.hpp"

namespace mrfuzz {

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

}  // namespace

std::string format_status(const FuzzStats& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "execs=%llu\nexecs_per_sec=%.1f\npaths=%zu\ncrashes=%zu\nhangs=%zu\n",
                  static_cast<unsigned long long>(s.execs), s.execs_per_sec, s.paths,
                  s.crashes, s.hangs);
    return buf;
}

FuzzStats fuzz(Campaign& c, CorpusStore& store, Mutator& mut, Xoshiro256ss& rng,
               const FuzzBudget& budget, const std::filesystem::path& status_path) {
    FuzzStats stats;
    const auto t0 = clock_type::now();
    auto next_status = t0 + std::chrono::seconds(1);

    auto refresh_counts = [&] {
        stats.paths = store.size();
        stats.crashes = store.unique_crashes();
        stats.hangs = store.unique_hangs();
    };
    auto write_status = [&] {
        stats.elapsed_seconds = seconds_since(t0);
        stats.execs_per_sec =
            stats.elapsed_seconds > 0.0 ? static_cast<double>(stats.execs) / stats.elapsed_seconds
                                        : 0.0;
        if (!status_path.empty()) {
            std::string text = format_status(stats);
            write_file_atomic(status_path,
                              {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
        }
    };

    refresh_counts();
    while (stats.execs < budget.max_execs && seconds_since(t0) < budget.max_seconds) {
        const QueueEntry& base = store.pick_next(rng);

        std::vector<uint8_t> input;
        // Occasionally recombine two queue entries before havoc; both parents
        // need two bytes for a cut point each.
        if (store.size() >= 2 && base.input.size() >= 2 && rng.chance(0.15)) {
            const QueueEntry& other = store.entries()[rng.below(store.size())];
            if (other.input.size() >= 2 && other.id != base.id)
                input = mut.havoc(mut.splice(base.input, other.input));
            else
                input = mut.havoc(base.input);
        } else {
            input = mut.havoc(base.input);
        }

        RunOutcome o = c.run_one(input);
        if (o.skipped) continue;
        ++stats.execs;

        switch (classify_run(o)) {
            case RunClass::Crash:
                store.add_crash(input, crash_dedup_key(o, c.machine().last_block_pc()));
                break;
            case RunClass::Hang:
                store.add_hang(input);
                break;
            case RunClass::Clean:
                break;
        }
        // Interesting inputs go back into the queue regardless of class, so
        // the store's global map tracks the campaign's seen map exactly.
        if (o.interesting) store.add_if_interesting(input, o, c.run_map());

        refresh_counts();
        if (clock_type::now() >= next_status) {
            write_status();
            next_status += std::chrono::seconds(1);
        }
    }

    write_status();
    return stats;
}

}  // namespace mrfuzz
