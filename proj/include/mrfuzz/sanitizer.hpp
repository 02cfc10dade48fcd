#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrfuzz/vm.hpp"

namespace mrfuzz {

enum class CrashKind : uint8_t {
    OobRead,
    OobWrite,
    UseAfterFreeRead,
    UseAfterFreeWrite,
    DoubleFree,
    InvalidFree,
    WildAccess,
};

const char* crash_kind_name(CrashKind k);

struct CrashReport {
    CrashKind kind;
    uint32_t pc = 0;    // instruction making the access (call site for free bugs)
    uint32_t addr = 0;  // first poisoned byte touched
    uint32_t size = 0;  // full guest access size
    std::optional<uint32_t> related_chunk;
    uint64_t dedup_key = 0;

    // One JSON-lines record, stable field order.
    std::string to_json() const;
};

// Run aborts with this HookAbort code when the arena cannot satisfy an
// allocation; the executor files it as a hang-class outcome, not a finding.
constexpr uint32_t kAbortOutOfMemory = 0xf00d;

// Trailing guard size for a chunk of the given (clamped) size:
// clamp(round_up(size/4, 16), 16, 256). Proportional so bigger chunks get
// wider guards, floored so tiny chunks still catch off-by-small overflows,
// capped so the arena is not all guard.
uint32_t redzone_policy(uint32_t size);

struct ArenaConfig {
    uint32_t base = 0;
    uint32_t size = 0;
};

// Where the target's allocator lives and how it passes arguments. The chunk
// pointer is returned by moving pc to the link register, skipping the original
// allocator body entirely.
struct AllocAbi {
    uint32_t alloc_addr = 0;
    uint32_t free_addr = 0;
    uint8_t size_reg = 1;
    uint8_t ptr_reg = 1;
    uint8_t ret_reg = 1;
};

// Drop-in sanitizing heap allocator. Construction installs it: the whole
// arena becomes poisoned, and intercepts replace the guest allocator pair.
// Allocation is bump-only — freed chunks are never reused within a run — with
// every chunk followed by a poisoned redzone, so out-of-bounds, use-after-free,
// double-free and wild accesses are classified as they happen. Findings
// accumulate and never stop the run (the executor collects them per test
// case); only arena exhaustion aborts, as HookAbort(kAbortOutOfMemory).
//
// The ledger and bump cursor live host-side and ride along inside machine
// snapshots as auxiliary state, so restore() brings the heap back exactly.
// The machine must outlive the sanitizer.
class Sanitizer {
public:
    // Throws ArenaUnmapped if the arena is not fully mapped read+write,
    // AbiInvalid for unmapped/non-executable allocator addresses or bad
    // register indices, AlreadyInstalled for a second sanitizer on the same
    // machine.
    Sanitizer(Machine& m, const ArenaConfig& arena, const AllocAbi& abi);
    ~Sanitizer();
    Sanitizer(const Sanitizer&) = delete;
    Sanitizer& operator=(const Sanitizer&) = delete;

    // Persistent-mode boundary: re-poison everything, clear the ledger, park
    // the cursor back at the arena base. Idempotent. Findings are untouched.
    void reset();

    const std::vector<CrashReport>& findings() const { return m_findings; }
    std::vector<CrashReport> take_findings() {
        std::vector<CrashReport> out = std::move(m_findings);
        m_findings.clear();
        return out;
    }

    struct ChunkInfo {
        uint32_t addr = 0;
        uint32_t size = 0;  // clamped request size
        bool live = false;
    };
    std::vector<ChunkInfo> chunks() const;
    uint32_t bytes_used() const { return m_cursor - m_arena.base; }

private:
    struct Record {
        uint32_t chunk = 0;
        uint32_t size = 0;  // clamped
        bool live = false;

        uint32_t redzone_end() const { return chunk + size + redzone_policy(size); }
    };

    void on_alloc(uint32_t pc);
    void on_free(uint32_t pc);
    void on_access(uint32_t pc, uint32_t addr, uint32_t size, bool is_write);
    void report(CrashKind kind, uint32_t pc, uint32_t addr, uint32_t size,
                std::optional<uint32_t> related);
    void set_poison(uint32_t addr, uint32_t len, uint8_t value);

    std::vector<uint8_t> capture_aux() const;
    void restore_aux(std::span<const uint8_t> data);
    void rebuild_poison();

    Machine& m_machine;
    ArenaConfig m_arena;
    AllocAbi m_abi;

    std::vector<Record> m_records;  // bump order == sorted by chunk address
    uint32_t m_cursor = 0;
    std::vector<uint8_t> m_poison;  // one byte per arena byte, 1 = poisoned
    std::vector<CrashReport> m_findings;
    std::vector<uint64_t> m_hook_ids;
};

}  // namespace mrfuzz
