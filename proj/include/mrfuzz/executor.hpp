#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mrfuzz/coverage.hpp"
#include "mrfuzz/harness.hpp"
#include "mrfuzz/sanitizer.hpp"
#include "mrfuzz/vm.hpp"

namespace mrfuzz {

// Everything one test case produced. Failures are data here, never
// exceptions: a faulting guest is a result, not an error.
struct RunOutcome {
    StopReason stop{};
    std::vector<CrashReport> findings;
    bool interesting = false;  // new classified buckets vs the campaign's seen-map
    bool validated = true;     // a validation callback may veto a crash
    bool skipped = false;      // placement callback declined the input
    uint32_t placed_len = 0;
    std::chrono::nanoseconds exec_time{0};
};

enum class RunClass : uint8_t { Clean, Crash, Hang };

const char* run_class_name(RunClass c);

// Sanitizer findings and guest faults are crashes; exhausted instruction
// budgets and hook aborts (allocator OOM) are hangs. A vetoed crash is clean.
RunClass classify_run(const RunOutcome& o);

// Stable triage identity: sanitizer findings carry their own key; guest
// faults fold (kind, faulting pc, last block) the same way. Zero for
// non-crash outcomes.
uint64_t crash_dedup_key(const RunOutcome& o, uint32_t last_block_pc);

// One fuzzing campaign over one machine: freezes the master snapshot at
// construction and runs every test case against a restored copy, so no input
// can leak state into the next. The decoded-block cache survives restores,
// keeping warm campaigns warm.
//
// With spec.persistent_iters = N > 0, runs use the cheap dirty-page reset and
// only every Nth run pays for a full restore; the sanitizer arena is
// re-poisoned on every iteration either way.
class Campaign {
public:
    // Returning false skips the input (the run is not executed or counted).
    using PlaceFn = std::function<bool(Machine&, std::span<const uint8_t>)>;
    // Invoked after crash-class stops, and after clean stops when
    // spec.always_validate; returning false vetoes the crash.
    using ValidateFn = std::function<bool(Machine&, const RunOutcome&)>;

    // The machine must be fully staged (image loaded, registers set): that
    // exact state becomes the master snapshot. The sanitizer, when present,
    // must already be installed on this machine and must outlive the campaign.
    Campaign(Machine& m, HarnessSpec spec, Sanitizer* sanitizer = nullptr,
             size_t map_size = kDefaultMapSize);
    ~Campaign();
    Campaign(const Campaign&) = delete;
    Campaign& operator=(const Campaign&) = delete;

    RunOutcome run_one(std::span<const uint8_t> input);

    // Override how inputs land in the guest (default: place_input per the
    // spec's placement) and whether crash-class stops count.
    void set_place_fn(PlaceFn fn) { m_place = std::move(fn); }
    void set_validate_fn(ValidateFn fn) { m_validate = std::move(fn); }

    // Raw edge map of the most recent run.
    const CoverageMap& run_map() const { return m_run_map; }
    // OR-accumulation of every run's classified buckets; the designated
    // global map that RunOutcome::interesting is computed against.
    std::span<const uint8_t> seen_map() const { return m_seen; }

    const Snapshot& master() const { return m_master; }
    const HarnessSpec& spec() const { return m_spec; }
    Machine& machine() { return m_machine; }
    Sanitizer* sanitizer() { return m_sanitizer; }

    uint64_t execs() const { return m_execs; }
    uint64_t full_restores() const { return m_full_restores; }

private:
    void reset_guest();

    Machine& m_machine;
    HarnessSpec m_spec;
    Sanitizer* m_sanitizer;
    Snapshot m_master;
    CoverageMap m_run_map;
    std::vector<uint8_t> m_seen;
    std::vector<uint8_t> m_classified;  // per-run scratch, avoids realloc
    uint64_t m_cov_hook = 0;
    PlaceFn m_place;
    ValidateFn m_validate;
    uint64_t m_execs = 0;
    uint64_t m_full_restores = 0;
    uint32_t m_iters_since_restore = 0;
};

}  // namespace mrfuzz
