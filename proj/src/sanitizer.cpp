#include "mrfuzz/sanitizer.hpp"

#include <algorithm>
#include <unordered_set>

namespace mrfuzz {

namespace {

// One sanitizer per machine; a second install is a harness bug.
std::unordered_set<const Machine*>& installed_set() {
    static std::unordered_set<const Machine*> s;
    return s;
}

bool range_has_perms(const Machine& m, uint32_t base, uint32_t size, uint8_t perms) {
    uint64_t cur = base;
    const uint64_t end = static_cast<uint64_t>(base) + size;
    for (const auto& r : m.regions()) {  // sorted by base
        if (cur >= end) break;
        const uint64_t rb = r.base, re = rb + r.size;
        if (re <= cur) continue;
        if (rb > cur) return false;  // gap
        if ((r.perms & perms) != perms) return false;
        cur = re;
    }
    return cur >= end;
}

}  // namespace

const char* crash_kind_name(CrashKind k) {
    switch (k) {
        case CrashKind::OobRead: return "OobRead";
        case CrashKind::OobWrite: return "OobWrite";
        case CrashKind::UseAfterFreeRead: return "UseAfterFreeRead";
        case CrashKind::UseAfterFreeWrite: return "UseAfterFreeWrite";
        case CrashKind::DoubleFree: return "DoubleFree";
        case CrashKind::InvalidFree: return "InvalidFree";
        case CrashKind::WildAccess: return "WildAccess";
    }
    return "?";
}

std::string CrashReport::to_json() const {
    std::string s = "{\"kind\":\"";
    s += crash_kind_name(kind);
    s += "\",\"pc\":\"" + hex_prefixed(pc) + "\"";
    s += ",\"addr\":\"" + hex_prefixed(addr) + "\"";
    s += ",\"size\":" + std::to_string(size);
    s += ",\"related_chunk\":";
    s += related_chunk ? "\"" + hex_prefixed(*related_chunk) + "\"" : "null";
    s += ",\"dedup_key\":\"" + hex64(dedup_key) + "\"}";
    return s;
}

uint32_t redzone_policy(uint32_t size) {
    uint32_t quarter = size / 4;
    uint32_t rounded = (quarter + 15) & ~15u;
    return std::clamp<uint32_t>(rounded, 16, 256);
}

Sanitizer::Sanitizer(Machine& m, const ArenaConfig& arena, const AllocAbi& abi)
    : m_machine(m), m_arena(arena), m_abi(abi), m_cursor(arena.base) {
    if (arena.size == 0 || !range_has_perms(m, arena.base, arena.size, kPermR | kPermW))
        throw Error(Err::ArenaUnmapped, "sanitizer arena must be mapped read+write");
    if (!range_has_perms(m, abi.alloc_addr, kInsnSize, kPermX) ||
        !range_has_perms(m, abi.free_addr, kInsnSize, kPermX))
        throw Error(Err::AbiInvalid, "allocator addresses must be mapped executable");
    if (abi.size_reg >= kNumRegs || abi.ptr_reg >= kNumRegs || abi.ret_reg >= kNumRegs)
        throw Error(Err::AbiInvalid, "allocator ABI register out of range");
    if (!installed_set().insert(&m).second)
        throw Error(Err::AlreadyInstalled, "a sanitizer is already installed on this machine");

    m_poison.assign(m_arena.size, 1);

    m_hook_ids.push_back(m_machine.add_hook(
        HookKind::MemRead, m_arena.base, m_arena.base + m_arena.size,
        [this](Machine&, uint32_t pc, uint32_t addr, uint32_t size, uint32_t) {
            on_access(pc, addr, size, /*is_write=*/false);
        }));
    m_hook_ids.push_back(m_machine.add_hook(
        HookKind::MemWrite, m_arena.base, m_arena.base + m_arena.size,
        [this](Machine&, uint32_t pc, uint32_t addr, uint32_t size, uint32_t) {
            on_access(pc, addr, size, /*is_write=*/true);
        }));
    m_hook_ids.push_back(m_machine.add_hook(
        HookKind::Intercept, m_abi.alloc_addr, m_abi.alloc_addr + 1,
        [this](Machine&, uint32_t pc, uint32_t, uint32_t, uint32_t) { on_alloc(pc); }));
    m_hook_ids.push_back(m_machine.add_hook(
        HookKind::Intercept, m_abi.free_addr, m_abi.free_addr + 1,
        [this](Machine&, uint32_t pc, uint32_t, uint32_t, uint32_t) { on_free(pc); }));

    m_machine.register_aux_state([this] { return capture_aux(); },
                                 [this](std::span<const uint8_t> d) { restore_aux(d); });
}

Sanitizer::~Sanitizer() {
    installed_set().erase(&m_machine);
    for (uint64_t id : m_hook_ids) m_machine.remove_hook(id);
}

void Sanitizer::reset() {
    std::fill(m_poison.begin(), m_poison.end(), 1);
    m_records.clear();
    m_cursor = m_arena.base;
}

std::vector<Sanitizer::ChunkInfo> Sanitizer::chunks() const {
    std::vector<ChunkInfo> out;
    out.reserve(m_records.size());
    for (const Record& r : m_records) out.push_back({r.chunk, r.size, r.live});
    return out;
}

void Sanitizer::set_poison(uint32_t addr, uint32_t len, uint8_t value) {
    std::fill_n(m_poison.begin() + (addr - m_arena.base), len, value);
}

void Sanitizer::report(CrashKind kind, uint32_t pc, uint32_t addr, uint32_t size,
                       std::optional<uint32_t> related) {
    CrashReport r;
    r.kind = kind;
    r.pc = pc;
    r.addr = addr;
    r.size = size;
    r.related_chunk = related;
    uint64_t h = fnv1a64_u32(static_cast<uint32_t>(kind), kFnvOffset);
    h = fnv1a64_u32(pc, h);
    r.dedup_key = fnv1a64_u32(m_machine.last_block_pc(), h);
    m_findings.push_back(std::move(r));
}

void Sanitizer::on_alloc(uint32_t pc) {
    (void)pc;
    CpuState& cpu = m_machine.cpu();
    const uint32_t lr = cpu.regs[kRegLr];
    uint32_t size = std::max<uint32_t>(cpu.regs[m_abi.size_reg], 1);

    uint32_t chunk = (m_cursor + 15) & ~15u;
    uint64_t needed = static_cast<uint64_t>(chunk) + size + redzone_policy(size);
    if (needed > static_cast<uint64_t>(m_arena.base) + m_arena.size) {
        cpu.regs[m_abi.ret_reg] = 0;
        cpu.pc = lr;
        m_machine.request_abort(kAbortOutOfMemory);
        return;
    }

    set_poison(chunk, size, 0);
    // Fresh chunks read back zeroed so run behavior is a pure function of the
    // input even when earlier runs dirtied the arena.
    std::vector<uint8_t> zeros(size, 0);
    m_machine.write_mem(chunk, zeros);

    m_records.push_back({chunk, size, /*live=*/true});
    m_cursor = chunk + size + redzone_policy(size);

    cpu.regs[m_abi.ret_reg] = chunk;
    cpu.pc = lr;
}

void Sanitizer::on_free(uint32_t pc) {
    (void)pc;
    CpuState& cpu = m_machine.cpu();
    const uint32_t lr = cpu.regs[kRegLr];
    const uint32_t ptr = cpu.regs[m_abi.ptr_reg];
    // The intercept fires with pc parked at the allocator stub, which is the
    // same for every caller; the call site (lr - 4) is the useful location.
    const uint32_t call_site = lr - kInsnSize;

    auto it = std::lower_bound(m_records.begin(), m_records.end(), ptr,
                               [](const Record& r, uint32_t p) { return r.chunk < p; });
    if (it == m_records.end() || it->chunk != ptr) {
        report(CrashKind::InvalidFree, call_site, ptr, 0, std::nullopt);
    } else if (!it->live) {
        report(CrashKind::DoubleFree, call_site, ptr, 0, ptr);
    } else {
        it->live = false;
        set_poison(it->chunk, it->size, 1);
    }
    cpu.pc = lr;
}

void Sanitizer::on_access(uint32_t pc, uint32_t addr, uint32_t size, bool is_write) {
    // Clip the access span to the arena, then find the first poisoned byte.
    uint64_t lo = std::max<uint64_t>(addr, m_arena.base);
    uint64_t hi = std::min<uint64_t>(static_cast<uint64_t>(addr) + size,
                                     static_cast<uint64_t>(m_arena.base) + m_arena.size);
    uint32_t bad = 0;
    bool found = false;
    for (uint64_t a = lo; a < hi; ++a) {
        if (m_poison[a - m_arena.base]) {
            bad = static_cast<uint32_t>(a);
            found = true;
            break;
        }
    }
    if (!found) return;

    // Last chunk at or below the poisoned byte decides the classification.
    auto it = std::upper_bound(m_records.begin(), m_records.end(), bad,
                               [](uint32_t p, const Record& r) { return p < r.chunk; });
    if (it == m_records.begin()) {
        report(CrashKind::WildAccess, pc, bad, size, std::nullopt);
        return;
    }
    const Record& rec = *std::prev(it);
    if (bad < rec.chunk + rec.size) {
        report(is_write ? CrashKind::UseAfterFreeWrite : CrashKind::UseAfterFreeRead, pc, bad,
               size, rec.chunk);
    } else if (bad < rec.redzone_end()) {
        report(is_write ? CrashKind::OobWrite : CrashKind::OobRead, pc, bad, size, rec.chunk);
    } else if (it != m_records.end() && bad < it->chunk) {
        // alignment gap between the previous redzone and the next chunk:
        // treat as an underflow of the next chunk
        report(is_write ? CrashKind::OobWrite : CrashKind::OobRead, pc, bad, size, it->chunk);
    } else {
        report(CrashKind::WildAccess, pc, bad, size, std::nullopt);
    }
}

std::vector<uint8_t> Sanitizer::capture_aux() const {
    std::vector<uint8_t> out(8 + m_records.size() * 9);
    store_le32(out.data(), m_cursor);
    store_le32(out.data() + 4, static_cast<uint32_t>(m_records.size()));
    size_t off = 8;
    for (const Record& r : m_records) {
        store_le32(out.data() + off, r.chunk);
        store_le32(out.data() + off + 4, r.size);
        out[off + 8] = r.live ? 1 : 0;
        off += 9;
    }
    return out;
}

void Sanitizer::restore_aux(std::span<const uint8_t> data) {
    if (data.size() < 8) throw Error(Err::Malformed, "sanitizer snapshot payload truncated");
    m_cursor = load_le32(data.data());
    uint32_t n = load_le32(data.data() + 4);
    if (data.size() != 8 + static_cast<size_t>(n) * 9)
        throw Error(Err::Malformed, "sanitizer snapshot payload size mismatch");
    m_records.clear();
    m_records.reserve(n);
    size_t off = 8;
    for (uint32_t i = 0; i < n; ++i) {
        Record r;
        r.chunk = load_le32(data.data() + off);
        r.size = load_le32(data.data() + off + 4);
        r.live = data[off + 8] != 0;
        m_records.push_back(r);
        off += 9;
    }
    rebuild_poison();
}

void Sanitizer::rebuild_poison() {
    // Poison is fully derived: everything guarded except live chunk bodies.
    std::fill(m_poison.begin(), m_poison.end(), 1);
    for (const Record& r : m_records)
        if (r.live) set_poison(r.chunk, r.size, 0);
}

}  // namespace mrfuzz
