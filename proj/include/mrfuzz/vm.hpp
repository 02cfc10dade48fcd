#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrfuzz/isa.hpp"
#include "mrfuzz/util.hpp"

namespace mrfuzz {

constexpr uint8_t kPermR = 1;
constexpr uint8_t kPermW = 2;
constexpr uint8_t kPermX = 4;
constexpr uint32_t kPageSize = 4096;

struct CpuState {
    std::array<uint32_t, kNumRegs> regs{};
    uint32_t pc = 0;
    // Flags: Z (equal), N (signed less-than), ULT (unsigned less-than).
    bool z = false, n = false, ult = false;

    bool operator==(const CpuState&) const = default;
};

enum class StopKind : uint8_t {
    ExitHit,
    Halt,
    UnmappedRead,
    UnmappedWrite,
    PermViolation,
    InvalidInstruction,
    BudgetExceeded,
    HookAbort,
};

const char* stop_kind_name(StopKind k);

struct StopReason {
    StopKind kind = StopKind::Halt;
    uint32_t addr = 0;        // fault address, or the exit pc for ExitHit
    uint32_t pc_at_stop = 0;
    uint64_t instructions = 0;
    uint32_t exit_code = 0;   // ECALL 1 passes r1 through here
    uint32_t abort_code = 0;  // HookAbort

    bool is_fault() const {
        return kind == StopKind::UnmappedRead || kind == StopKind::UnmappedWrite ||
               kind == StopKind::PermViolation || kind == StopKind::InvalidInstruction;
    }
};

enum class HookKind : uint8_t { BlockEntry, MemRead, MemWrite, Intercept };

class Machine;

// One signature for all hook kinds. BlockEntry: addr=pc, size=0. Mem hooks:
// addr/size of the access, value carries the data for writes (0 for reads).
// Intercept: addr = intercepted address; fires before the instruction there
// executes, and moving cpu().pc skips that instruction entirely.
using HookFn = std::function<void(Machine&, uint32_t pc, uint32_t addr, uint32_t size,
                                  uint32_t value)>;

struct TraceSink {
    virtual ~TraceSink() = default;
    virtual void on_insn(const std::string& line) = 0;
    virtual void on_guest_byte(uint8_t b) = 0;
};

// Full machine capture: every mapped region's bytes, registers + flags, and
// the auxiliary payloads of attached components (heap sanitizer shadow and
// ledger travel through those). Hook registrations deliberately stay outside:
// they belong to the harness, not to the frozen guest.
struct Snapshot {
    struct RegionImage {
        uint32_t base = 0;
        uint32_t size = 0;
        uint8_t perms = 0;
        std::vector<uint8_t> bytes;
    };
    std::vector<RegionImage> regions;
    CpuState cpu;
    std::vector<std::vector<uint8_t>> aux;
    uint64_t exec_gen = 0;  // decode-cache validity token, see Machine::restore
};

uint64_t snapshot_hash(const Snapshot& s);

class Machine {
public:
    Machine() = default;
    Machine(const Machine&) = delete;
    Machine& operator=(const Machine&) = delete;

    // --- memory regions ------------------------------------------------
    // base and size must be multiples of 4096; new region must not overlap
    // any existing one. Content starts zeroed.
    void map_region(uint32_t base, uint32_t size, uint8_t perms);
    void unmap_region(uint32_t base);
    bool is_mapped(uint32_t addr, uint32_t len) const;

    // Host-side access: little-endian byte transfer, may span adjacent
    // regions, never triggers guest hooks. Writes require the write perm only
    // when respect_perms(true) was set; by default harness writes bypass perms.
    void read_mem(uint32_t addr, std::span<uint8_t> out) const;
    void write_mem(uint32_t addr, std::span<const uint8_t> data);
    uint32_t read_u32(uint32_t addr) const;
    uint16_t read_u16(uint32_t addr) const;
    void write_u32(uint32_t addr, uint32_t v);
    void write_u16(uint32_t addr, uint16_t v);
    void respect_perms(bool enabled) { m_respect_perms = enabled; }

    // --- hooks ----------------------------------------------------------
    // Mem hooks fire once per guest access whose [addr, addr+size) intersects
    // [lo, hi). Intercept hooks use lo as the address (hi ignored).
    uint64_t add_hook(HookKind kind, uint32_t lo, uint32_t hi, HookFn fn);
    void remove_hook(uint64_t id);
    // Valid inside a hook callback: stop the current run with HookAbort(code).
    void request_abort(uint32_t code);

    // --- execution --------------------------------------------------------
    CpuState& cpu() { return m_cpu; }
    const CpuState& cpu() const { return m_cpu; }

    StopReason run(std::span<const uint32_t> exits, uint64_t max_instructions);
    StopReason trace_run(std::span<const uint32_t> exits, uint64_t max_instructions,
                         TraceSink& sink);

    // Start address of the most recently entered block (crash dedup context).
    uint32_t last_block_pc() const { return m_last_block_pc; }

    // ECALL 0 bytes go here during non-traced runs (default: discarded).
    void set_guest_output(std::function<void(uint8_t)> fn) { m_guest_out = std::move(fn); }

    // --- snapshots --------------------------------------------------------
    // Components with out-of-guest state (the heap sanitizer) register a
    // capture/restore pair; their payloads ride inside every Snapshot.
    using AuxCapture = std::function<std::vector<uint8_t>()>;
    using AuxRestore = std::function<void(std::span<const uint8_t>)>;
    size_t register_aux_state(AuxCapture capture, AuxRestore restore);

    Snapshot snapshot() const;
    // Byte-identical rollback of memory, registers, flags and aux payloads.
    // Throws RegionSetChanged if the mapped-region set differs from the
    // snapshot's. The decoded-block cache is kept when executable bytes are
    // provably unchanged (generation token), so warm campaigns stay warm.
    void restore(const Snapshot& s);

    // Persistent-mode fast path: copy back only the dirty pages of the chosen
    // regions (empty filter = every writable region) plus registers/flags.
    // Aux payloads are NOT touched; callers reset those components directly.
    void reset_dirty_regions(const Snapshot& s, std::span<const uint32_t> region_bases);

    struct RegionInfo {
        uint32_t base, size;
        uint8_t perms;
    };
    std::vector<RegionInfo> regions() const;

private:
    struct Region {
        uint32_t base = 0;
        uint32_t size = 0;
        uint8_t perms = 0;
        std::vector<uint8_t> bytes;
        std::vector<uint64_t> dirty;  // bit per page
        bool any_dirty = false;

        uint32_t end() const { return base + size; }
        void mark_dirty(uint32_t off, uint32_t len);
    };

    struct DecBlock {
        uint32_t start = 0;
        uint32_t end = 0;  // first byte past the decoded instructions
        bool starts_at_intercept = false;
        std::vector<Insn> insns;
    };

    struct Hook {
        uint64_t id;
        HookKind kind;
        uint32_t lo, hi;
        HookFn fn;
    };

    // region helpers
    Region* find_region(uint32_t addr);
    const Region* find_region(uint32_t addr) const;
    int region_index(uint32_t addr) const;

    // guest access; on failure fills m_fault and returns false
    bool guest_load(uint32_t pc, uint32_t addr, uint32_t size, uint32_t& out);
    bool guest_store(uint32_t pc, uint32_t addr, uint32_t size, uint32_t val);
    bool validate_span(uint32_t addr, uint32_t size, bool write, uint32_t pc);
    void fire_mem_hooks(std::vector<Hook>& hooks, uint32_t pc, uint32_t addr,
                        uint32_t size, uint32_t value);

    // decode/execute
    const DecBlock* lookup_block(uint32_t pc, uint64_t executed);
    bool is_exit(uint32_t pc) const;
    bool is_intercept(uint32_t pc) const;
    void set_exits(std::span<const uint32_t> exits);
    // Deferred: the cache is cleared at the next block boundary so a hook
    // callback (or self-modifying guest store) can never invalidate the block
    // currently being executed.
    void flush_decode_cache() { m_flush_pending = true; }
    void drain_flush() {
        if (m_flush_pending) {
            m_cache.clear();
            m_flush_pending = false;
        }
    }
    void note_exec_write() { ++m_exec_gen; flush_decode_cache(); }

    template <bool Tracing>
    StopReason run_impl(std::span<const uint32_t> exits, uint64_t max_instructions,
                        TraceSink* sink);

    std::vector<Region> m_regions;  // sorted by base
    mutable int m_region_cache = -1;
    bool m_respect_perms = false;

    CpuState m_cpu;
    uint32_t m_last_block_pc = 0;

    std::unordered_map<uint32_t, DecBlock> m_cache;
    bool m_flush_pending = false;
    std::vector<uint32_t> m_exits;            // sorted
    std::vector<uint32_t> m_intercept_addrs;  // sorted
    uint64_t m_exec_gen = 1;

    std::vector<Hook> m_block_hooks, m_read_hooks, m_write_hooks, m_intercept_hooks;
    uint64_t m_next_hook_id = 1;

    bool m_abort = false;
    uint32_t m_abort_code = 0;
    StopReason m_fault{};

    std::function<void(uint8_t)> m_guest_out;

    struct AuxClient {
        AuxCapture capture;
        AuxRestore restore;
    };
    std::vector<AuxClient> m_aux;
};

}  // namespace mrfuzz
