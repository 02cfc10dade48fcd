#include "mrfuzz/vm.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace mrfuzz {

const char* stop_kind_name(StopKind k) {
    switch (k) {
        case StopKind::ExitHit: return "ExitHit";
        case StopKind::Halt: return "Halt";
        case StopKind::UnmappedRead: return "UnmappedRead";
        case StopKind::UnmappedWrite: return "UnmappedWrite";
        case StopKind::PermViolation: return "PermViolation";
        case StopKind::InvalidInstruction: return "InvalidInstruction";
        case StopKind::BudgetExceeded: return "BudgetExceeded";
        case StopKind::HookAbort: return "HookAbort";
    }
    return "?";
}

void Machine::Region::mark_dirty(uint32_t off, uint32_t len) {
    uint32_t first = off / kPageSize;
    uint32_t last = (off + len - 1) / kPageSize;
    for (uint32_t p = first; p <= last; ++p) dirty[p >> 6] |= 1ull << (p & 63);
    any_dirty = true;
}

// --- regions ---------------------------------------------------------------

void Machine::map_region(uint32_t base, uint32_t size, uint8_t perms) {
    if (base % kPageSize != 0 || size == 0 || size % kPageSize != 0)
        throw Error(Err::Misaligned, "region base/size must be 4096-aligned");
    uint64_t end = static_cast<uint64_t>(base) + size;
    if (end > 0x100000000ull)
        throw Error(Err::Misaligned, "region exceeds 32-bit address space");
    for (const Region& r : m_regions) {
        if (base < r.end() && r.base < end)
            throw Error(Err::Overlap, "region overlaps existing mapping");
    }
    Region reg;
    reg.base = base;
    reg.size = size;
    reg.perms = perms;
    reg.bytes.assign(size, 0);
    reg.dirty.assign((size / kPageSize + 63) / 64, 0);
    auto it = std::upper_bound(m_regions.begin(), m_regions.end(), base,
                               [](uint32_t b, const Region& r) { return b < r.base; });
    m_regions.insert(it, std::move(reg));
    m_region_cache = -1;
    flush_decode_cache();
}

void Machine::unmap_region(uint32_t base) {
    auto it = std::find_if(m_regions.begin(), m_regions.end(),
                           [&](const Region& r) { return r.base == base; });
    if (it == m_regions.end()) throw Error(Err::Unmapped, "no region at that base");
    m_regions.erase(it);
    m_region_cache = -1;
    flush_decode_cache();
}

int Machine::region_index(uint32_t addr) const {
    if (m_region_cache >= 0 && static_cast<size_t>(m_region_cache) < m_regions.size()) {
        const Region& r = m_regions[static_cast<size_t>(m_region_cache)];
        if (addr >= r.base && addr < r.end()) return m_region_cache;
    }
    // binary search: last region with base <= addr
    size_t lo = 0, hi = m_regions.size();
    while (lo < hi) {
        size_t mid = (lo + hi) / 2;
        if (m_regions[mid].base <= addr)
            lo = mid + 1;
        else
            hi = mid;
    }
    if (lo == 0) return -1;
    const Region& r = m_regions[lo - 1];
    if (addr >= r.base && addr < r.end()) {
        m_region_cache = static_cast<int>(lo - 1);
        return m_region_cache;
    }
    return -1;
}

Machine::Region* Machine::find_region(uint32_t addr) {
    int i = region_index(addr);
    return i < 0 ? nullptr : &m_regions[static_cast<size_t>(i)];
}

const Machine::Region* Machine::find_region(uint32_t addr) const {
    int i = region_index(addr);
    return i < 0 ? nullptr : &m_regions[static_cast<size_t>(i)];
}

bool Machine::is_mapped(uint32_t addr, uint32_t len) const {
    uint32_t cur = addr;
    uint64_t end = static_cast<uint64_t>(addr) + len;
    while (cur < end) {
        const Region* r = find_region(cur);
        if (!r) return false;
        cur = r->end();
        if (cur == 0) break;  // wrapped at 2^32
    }
    return true;
}

void Machine::read_mem(uint32_t addr, std::span<uint8_t> out) const {
    size_t done = 0;
    while (done < out.size()) {
        const Region* r = find_region(addr + static_cast<uint32_t>(done));
        if (!r) throw Error(Err::Unmapped, "read from unmapped guest address",
                            addr + done);
        uint32_t off = addr + static_cast<uint32_t>(done) - r->base;
        size_t chunk = std::min<size_t>(out.size() - done, r->size - off);
        std::memcpy(out.data() + done, r->bytes.data() + off, chunk);
        done += chunk;
    }
}

void Machine::write_mem(uint32_t addr, std::span<const uint8_t> data) {
    // validate the whole span first so a failing write changes nothing
    size_t probe = 0;
    while (probe < data.size()) {
        const Region* r = find_region(addr + static_cast<uint32_t>(probe));
        if (!r) throw Error(Err::Unmapped, "write to unmapped guest address",
                            addr + probe);
        if (m_respect_perms && !(r->perms & kPermW))
            throw Error(Err::Unmapped, "write to non-writable region", addr + probe);
        probe += std::min<size_t>(data.size() - probe, r->size -
                                  (addr + static_cast<uint32_t>(probe) - r->base));
    }
    size_t done = 0;
    bool touched_exec = false;
    while (done < data.size()) {
        Region* r = find_region(addr + static_cast<uint32_t>(done));
        uint32_t off = addr + static_cast<uint32_t>(done) - r->base;
        size_t chunk = std::min<size_t>(data.size() - done, r->size - off);
        std::memcpy(r->bytes.data() + off, data.data() + done, chunk);
        r->mark_dirty(off, static_cast<uint32_t>(chunk));
        if (r->perms & kPermX) touched_exec = true;
        done += chunk;
    }
    if (touched_exec) note_exec_write();
}

uint32_t Machine::read_u32(uint32_t addr) const {
    uint8_t b[4];
    read_mem(addr, b);
    return load_le32(b);
}

uint16_t Machine::read_u16(uint32_t addr) const {
    uint8_t b[2];
    read_mem(addr, b);
    return load_le16(b);
}

void Machine::write_u32(uint32_t addr, uint32_t v) {
    uint8_t b[4];
    store_le32(b, v);
    write_mem(addr, b);
}

void Machine::write_u16(uint32_t addr, uint16_t v) {
    uint8_t b[2];
    store_le16(b, v);
    write_mem(addr, b);
}

// --- hooks -------------------------------------------------------------------

uint64_t Machine::add_hook(HookKind kind, uint32_t lo, uint32_t hi, HookFn fn) {
    Hook h{m_next_hook_id++, kind, lo, hi, std::move(fn)};
    switch (kind) {
        case HookKind::BlockEntry: m_block_hooks.push_back(std::move(h)); break;
        case HookKind::MemRead: m_read_hooks.push_back(std::move(h)); break;
        case HookKind::MemWrite: m_write_hooks.push_back(std::move(h)); break;
        case HookKind::Intercept: {
            m_intercept_hooks.push_back(std::move(h));
            m_intercept_addrs.push_back(lo);
            std::sort(m_intercept_addrs.begin(), m_intercept_addrs.end());
            flush_decode_cache();  // intercepts are block-split points
            break;
        }
    }
    return m_next_hook_id - 1;
}

void Machine::remove_hook(uint64_t id) {
    auto scrub = [&](std::vector<Hook>& v) {
        auto it = std::find_if(v.begin(), v.end(), [&](const Hook& h) { return h.id == id; });
        if (it == v.end()) return false;
        bool was_intercept = it->kind == HookKind::Intercept;
        uint32_t addr = it->lo;
        v.erase(it);
        if (was_intercept) {
            auto a = std::find(m_intercept_addrs.begin(), m_intercept_addrs.end(), addr);
            if (a != m_intercept_addrs.end()) m_intercept_addrs.erase(a);
            flush_decode_cache();
        }
        return true;
    };
    if (scrub(m_block_hooks) || scrub(m_read_hooks) || scrub(m_write_hooks) ||
        scrub(m_intercept_hooks))
        return;
    throw Error(Err::UnknownHook, "hook id not registered (double removal?)");
}

void Machine::request_abort(uint32_t code) {
    m_abort = true;
    m_abort_code = code;
}

void Machine::fire_mem_hooks(std::vector<Hook>& hooks, uint32_t pc, uint32_t addr,
                             uint32_t size, uint32_t value) {
    uint64_t end = static_cast<uint64_t>(addr) + size;
    // Index-based so a callback that registers another hook cannot invalidate
    // the traversal (removal from inside a callback is documented-unsupported).
    for (size_t i = 0; i < hooks.size(); ++i) {
        if (addr < hooks[i].hi && hooks[i].lo < end)
            hooks[i].fn(*this, pc, addr, size, value);
    }
}

// --- guest access ------------------------------------------------------------

bool Machine::validate_span(uint32_t addr, uint32_t size, bool write, uint32_t pc) {
    (void)pc;
    uint64_t end = static_cast<uint64_t>(addr) + size;
    uint64_t cur = addr;
    while (cur < end) {
        const Region* r = find_region(static_cast<uint32_t>(cur));
        if (!r) {
            m_fault.kind = write ? StopKind::UnmappedWrite : StopKind::UnmappedRead;
            m_fault.addr = static_cast<uint32_t>(cur);
            return false;
        }
        uint8_t need = write ? kPermW : kPermR;
        if (!(r->perms & need)) {
            m_fault.kind = StopKind::PermViolation;
            m_fault.addr = static_cast<uint32_t>(cur);
            return false;
        }
        cur = r->end();
        if (cur == 0) cur = end;  // wrapped
    }
    return true;
}

bool Machine::guest_load(uint32_t pc, uint32_t addr, uint32_t size, uint32_t& out) {
    if (!validate_span(addr, size, false, pc)) return false;
    if (!m_read_hooks.empty()) fire_mem_hooks(m_read_hooks, pc, addr, size, 0);

    const Region* r = find_region(addr);
    if (addr - r->base + size <= r->size) {
        const uint8_t* p = r->bytes.data() + (addr - r->base);
        out = size == 1 ? *p : (size == 2 ? load_le16(p) : load_le32(p));
    } else {
        uint8_t buf[4] = {};
        read_mem(addr, std::span<uint8_t>(buf, size));
        out = size == 1 ? buf[0] : (size == 2 ? load_le16(buf) : load_le32(buf));
    }
    return true;
}

bool Machine::guest_store(uint32_t pc, uint32_t addr, uint32_t size, uint32_t val) {
    if (!validate_span(addr, size, true, pc)) return false;
    if (!m_write_hooks.empty()) fire_mem_hooks(m_write_hooks, pc, addr, size, val);

    Region* r = find_region(addr);
    if (addr - r->base + size <= r->size) {
        uint8_t* p = r->bytes.data() + (addr - r->base);
        if (size == 1)
            *p = static_cast<uint8_t>(val);
        else if (size == 2)
            store_le16(p, static_cast<uint16_t>(val));
        else
            store_le32(p, val);
        r->mark_dirty(addr - r->base, size);
        if (r->perms & kPermX) note_exec_write();
    } else {
        uint8_t buf[4];
        store_le32(buf, val);
        write_mem(addr, std::span<const uint8_t>(buf, size));
    }
    return true;
}

// --- decode ------------------------------------------------------------------

bool Machine::is_exit(uint32_t pc) const {
    return std::binary_search(m_exits.begin(), m_exits.end(), pc);
}

bool Machine::is_intercept(uint32_t pc) const {
    return std::binary_search(m_intercept_addrs.begin(), m_intercept_addrs.end(), pc);
}

void Machine::set_exits(std::span<const uint32_t> exits) {
    std::vector<uint32_t> sorted(exits.begin(), exits.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted != m_exits) {
        m_exits = std::move(sorted);
        flush_decode_cache();  // exits are block-split points
    }
}

const Machine::DecBlock* Machine::lookup_block(uint32_t pc, uint64_t executed) {
    auto it = m_cache.find(pc);
    if (it != m_cache.end()) return &it->second;

    if (pc % kInsnSize != 0) {
        m_fault = {StopKind::InvalidInstruction, pc, pc, executed, 0, 0};
        return nullptr;
    }

    DecBlock blk;
    blk.start = pc;
    blk.starts_at_intercept = is_intercept(pc);
    uint32_t cur = pc;
    for (;;) {
        // exits and intercept addresses always begin a fresh block so the
        // per-block-entry checks in the run loop see them
        if (cur != pc && (is_exit(cur) || is_intercept(cur))) break;
        const Region* r = find_region(cur);
        if (!r || cur - r->base + kInsnSize > r->size) {
            if (cur == pc) {
                m_fault = {StopKind::UnmappedRead, cur, pc, executed, 0, 0};
                return nullptr;
            }
            break;
        }
        if (!(r->perms & kPermX)) {
            if (cur == pc) {
                m_fault = {StopKind::PermViolation, cur, pc, executed, 0, 0};
                return nullptr;
            }
            break;
        }
        uint32_t word = load_le32(r->bytes.data() + (cur - r->base));
        std::optional<Insn> insn = decode(word);
        if (!insn) {
            if (cur == pc) {
                m_fault = {StopKind::InvalidInstruction, cur, pc, executed, 0, 0};
                return nullptr;
            }
            break;
        }
        blk.insns.push_back(*insn);
        cur += kInsnSize;
        Op op = insn->op;
        if (op == Op::B || op == Op::Call || op == Op::Callr || op == Op::Ret ||
            op == Op::Halt)
            break;
        if (blk.insns.size() >= 512) break;  // cap pathological straight-line runs
    }
    blk.end = cur;
    auto [ins, ok] = m_cache.emplace(pc, std::move(blk));
    (void)ok;
    return &ins->second;
}

// --- execution -----------------------------------------------------------------

static void append_reg_delta(std::string& out, const CpuState& before,
                             const CpuState& after) {
    for (int i = 0; i < kNumRegs; ++i) {
        if (before.regs[static_cast<size_t>(i)] != after.regs[static_cast<size_t>(i)]) {
            out += " r" + std::to_string(i) + "=" +
                   hex_prefixed(after.regs[static_cast<size_t>(i)]);
        }
    }
    if (before.z != after.z) out += std::string(" Z=") + (after.z ? "1" : "0");
    if (before.n != after.n) out += std::string(" N=") + (after.n ? "1" : "0");
    if (before.ult != after.ult) out += std::string(" ULT=") + (after.ult ? "1" : "0");
}

template <bool Tracing>
StopReason Machine::run_impl(std::span<const uint32_t> exits, uint64_t max_instructions,
                             TraceSink* sink) {
    set_exits(exits);
    m_abort = false;
    uint64_t executed = 0;

    auto stop_at = [&](StopKind kind, uint32_t addr, uint32_t pc) {
        return StopReason{kind, addr, pc, executed, 0, 0};
    };

    for (;;) {
        drain_flush();
        uint32_t pc = m_cpu.pc;
        if (is_exit(pc)) return stop_at(StopKind::ExitHit, pc, pc);
        if (executed >= max_instructions)
            return stop_at(StopKind::BudgetExceeded, pc, pc);

        const DecBlock* blk = lookup_block(pc, executed);
        if (!blk) {
            m_fault.instructions = executed;
            return m_fault;
        }
        m_last_block_pc = pc;

        for (size_t i = 0; i < m_block_hooks.size(); ++i)
            m_block_hooks[i].fn(*this, pc, pc, 0, 0);
        if (m_abort) {
            StopReason s = stop_at(StopKind::HookAbort, pc, m_cpu.pc);
            s.abort_code = m_abort_code;
            return s;
        }

        if (blk->starts_at_intercept) {
            uint32_t before_pc = m_cpu.pc;
            for (size_t i = 0; i < m_intercept_hooks.size(); ++i) {
                if (m_intercept_hooks[i].lo == pc)
                    m_intercept_hooks[i].fn(*this, pc, pc, 0, 0);
            }
            if (m_abort) {
                StopReason s = stop_at(StopKind::HookAbort, pc, m_cpu.pc);
                s.abort_code = m_abort_code;
                return s;
            }
            if (m_cpu.pc != before_pc) continue;  // original instruction skipped
        }

        // Execute the block body.
        bool transferred = false;
        for (const Insn& insn : blk->insns) {
            uint32_t ipc = blk->start +
                           static_cast<uint32_t>(&insn - blk->insns.data()) * kInsnSize;
            if (executed >= max_instructions)
                return stop_at(StopKind::BudgetExceeded, ipc, ipc);
            m_cpu.pc = ipc;

            CpuState before;
            if constexpr (Tracing) before = m_cpu;
            int pending_out = -1;

            auto& regs = m_cpu.regs;
            switch (insn.op) {
                case Op::Halt: {
                    ++executed;
                    if constexpr (Tracing)
                        sink->on_insn(hex32(ipc) + ": HALT");
                    return stop_at(StopKind::Halt, ipc, ipc);
                }
                case Op::Movi:
                    regs[insn.a] = insn.imm16();
                    break;
                case Op::Movhi:
                    regs[insn.a] = (regs[insn.a] & 0xffffu) |
                                   (static_cast<uint32_t>(insn.imm16()) << 16);
                    break;
                case Op::Mov:
                    regs[insn.a] = regs[insn.b];
                    break;
                case Op::Add:
                    regs[insn.a] = regs[insn.b] + regs[insn.c];
                    break;
                case Op::Sub: {
                    uint32_t x = regs[insn.b], y = regs[insn.c];
                    m_cpu.z = x == y;
                    m_cpu.n = static_cast<int32_t>(x) < static_cast<int32_t>(y);
                    m_cpu.ult = x < y;
                    regs[insn.a] = x - y;
                    break;
                }
                case Op::And:
                    regs[insn.a] = regs[insn.b] & regs[insn.c];
                    break;
                case Op::Or:
                    regs[insn.a] = regs[insn.b] | regs[insn.c];
                    break;
                case Op::Xor:
                    regs[insn.a] = regs[insn.b] ^ regs[insn.c];
                    break;
                case Op::Shl:
                    regs[insn.a] = regs[insn.b] << insn.c;
                    break;
                case Op::Shr:
                    regs[insn.a] = regs[insn.b] >> insn.c;
                    break;
                case Op::Addi:
                    regs[insn.a] = regs[insn.b] + static_cast<uint32_t>(insn.simm8());
                    break;
                case Op::Ldb: {
                    uint32_t v;
                    if (!guest_load(ipc, regs[insn.b] + static_cast<uint32_t>(insn.simm8()),
                                    1, v)) {
                        m_fault.pc_at_stop = ipc;
                        m_fault.instructions = executed;
                        return m_fault;
                    }
                    regs[insn.a] = v;
                    break;
                }
                case Op::Stb:
                    if (!guest_store(ipc, regs[insn.b] + static_cast<uint32_t>(insn.simm8()),
                                     1, regs[insn.a] & 0xff)) {
                        m_fault.pc_at_stop = ipc;
                        m_fault.instructions = executed;
                        return m_fault;
                    }
                    break;
                case Op::Ldw: {
                    uint32_t v;
                    if (!guest_load(ipc, regs[insn.b] + static_cast<uint32_t>(insn.simm8()),
                                    4, v)) {
                        m_fault.pc_at_stop = ipc;
                        m_fault.instructions = executed;
                        return m_fault;
                    }
                    regs[insn.a] = v;
                    break;
                }
                case Op::Stw:
                    if (!guest_store(ipc, regs[insn.b] + static_cast<uint32_t>(insn.simm8()),
                                     4, regs[insn.a])) {
                        m_fault.pc_at_stop = ipc;
                        m_fault.instructions = executed;
                        return m_fault;
                    }
                    break;
                case Op::Cmp: {
                    uint32_t x = regs[insn.a], y = regs[insn.b];
                    m_cpu.z = x == y;
                    m_cpu.n = static_cast<int32_t>(x) < static_cast<int32_t>(y);
                    m_cpu.ult = x < y;
                    break;
                }
                case Op::B: {
                    bool take = false;
                    switch (static_cast<Cc>(insn.a)) {
                        case Cc::Al: take = true; break;
                        case Cc::Eq: take = m_cpu.z; break;
                        case Cc::Ne: take = !m_cpu.z; break;
                        case Cc::Ult: take = m_cpu.ult; break;
                        case Cc::Uge: take = !m_cpu.ult; break;
                        case Cc::Slt: take = m_cpu.n; break;
                        case Cc::Sge: take = !m_cpu.n; break;
                    }
                    m_cpu.pc = take ? ipc + 4 + static_cast<uint32_t>(insn.simm16() * 4)
                                    : ipc + 4;
                    transferred = true;
                    break;
                }
                case Op::Call:
                    regs[kRegLr] = ipc + 4;
                    m_cpu.pc = ipc + 4 + static_cast<uint32_t>(insn.simm16() * 4);
                    transferred = true;
                    break;
                case Op::Callr: {
                    uint32_t target = regs[insn.a];
                    regs[kRegLr] = ipc + 4;
                    m_cpu.pc = target;
                    transferred = true;
                    break;
                }
                case Op::Ret:
                    m_cpu.pc = regs[kRegLr];
                    transferred = true;
                    break;
                case Op::Ecall: {
                    if (insn.a == 0) {
                        pending_out = static_cast<int>(regs[1] & 0xff);
                    } else {
                        ++executed;
                        if constexpr (Tracing)
                            sink->on_insn(hex32(ipc) + ": ECALL 1");
                        StopReason s = stop_at(StopKind::Halt, ipc, ipc);
                        s.exit_code = regs[1];
                        return s;
                    }
                    break;
                }
            }
            ++executed;

            if constexpr (Tracing) {
                std::string line = hex32(ipc) + ": " + disasm(insn, ipc);
                std::string delta;
                append_reg_delta(delta, before, m_cpu);
                if (!delta.empty()) line += " ;" + delta;
                sink->on_insn(line);
            }
            if (pending_out >= 0) {
                if constexpr (Tracing) sink->on_guest_byte(static_cast<uint8_t>(pending_out));
                if (m_guest_out) m_guest_out(static_cast<uint8_t>(pending_out));
            }
            if (m_abort) {
                StopReason s = stop_at(StopKind::HookAbort, m_cpu.pc, m_cpu.pc);
                s.abort_code = m_abort_code;
                return s;
            }
            if (transferred) break;
        }
        if (!transferred) m_cpu.pc = blk->end;  // fell through a split point
    }
}

StopReason Machine::run(std::span<const uint32_t> exits, uint64_t max_instructions) {
    return run_impl<false>(exits, max_instructions, nullptr);
}

StopReason Machine::trace_run(std::span<const uint32_t> exits, uint64_t max_instructions,
                              TraceSink& sink) {
    return run_impl<true>(exits, max_instructions, &sink);
}

// --- snapshots ---------------------------------------------------------------

size_t Machine::register_aux_state(AuxCapture capture, AuxRestore restore) {
    m_aux.push_back({std::move(capture), std::move(restore)});
    return m_aux.size() - 1;
}

Snapshot Machine::snapshot() const {
    Snapshot s;
    s.regions.reserve(m_regions.size());
    for (const Region& r : m_regions)
        s.regions.push_back({r.base, r.size, r.perms, r.bytes});
    s.cpu = m_cpu;
    for (const AuxClient& c : m_aux) s.aux.push_back(c.capture());
    s.exec_gen = m_exec_gen;
    return s;
}

void Machine::restore(const Snapshot& s) {
    if (s.regions.size() != m_regions.size() || s.aux.size() != m_aux.size())
        throw Error(Err::RegionSetChanged, "snapshot does not match mapped regions");
    for (size_t i = 0; i < m_regions.size(); ++i) {
        const auto& img = s.regions[i];
        Region& r = m_regions[i];
        if (img.base != r.base || img.size != r.size || img.perms != r.perms)
            throw Error(Err::RegionSetChanged, "snapshot does not match mapped regions");
    }
    for (size_t i = 0; i < m_regions.size(); ++i) {
        Region& r = m_regions[i];
        std::memcpy(r.bytes.data(), s.regions[i].bytes.data(), r.size);
        std::fill(r.dirty.begin(), r.dirty.end(), 0);
        r.any_dirty = false;
    }
    m_cpu = s.cpu;
    for (size_t i = 0; i < m_aux.size(); ++i) m_aux[i].restore(s.aux[i]);
    // Keep the decoded-block cache only if executable bytes provably match the
    // snapshot (no exec write happened since it was taken).
    if (m_exec_gen != s.exec_gen) {
        flush_decode_cache();
        m_exec_gen = s.exec_gen;
    }
}

void Machine::reset_dirty_regions(const Snapshot& s,
                                  std::span<const uint32_t> region_bases) {
    if (s.regions.size() != m_regions.size())
        throw Error(Err::RegionSetChanged, "snapshot does not match mapped regions");
    for (size_t i = 0; i < m_regions.size(); ++i) {
        Region& r = m_regions[i];
        const auto& img = s.regions[i];
        if (img.base != r.base || img.size != r.size)
            throw Error(Err::RegionSetChanged, "snapshot does not match mapped regions");
        if (!r.any_dirty) continue;
        bool selected = region_bases.empty()
                            ? (r.perms & kPermW) != 0
                            : std::find(region_bases.begin(), region_bases.end(),
                                        r.base) != region_bases.end();
        if (!selected) continue;
        uint32_t pages = r.size / kPageSize;
        bool touched_exec = false;
        for (uint32_t w = 0; w < r.dirty.size(); ++w) {
            uint64_t bits = r.dirty[w];
            while (bits) {
                uint32_t bit = static_cast<uint32_t>(std::countr_zero(bits));
                bits &= bits - 1;
                uint32_t page = w * 64 + bit;
                if (page >= pages) break;
                std::memcpy(r.bytes.data() + page * kPageSize,
                            s.regions[i].bytes.data() + page * kPageSize, kPageSize);
                if (r.perms & kPermX) touched_exec = true;
            }
            r.dirty[w] = 0;
        }
        r.any_dirty = false;
        if (touched_exec) note_exec_write();
    }
    m_cpu = s.cpu;
}

std::vector<Machine::RegionInfo> Machine::regions() const {
    std::vector<RegionInfo> out;
    out.reserve(m_regions.size());
    for (const Region& r : m_regions) out.push_back({r.base, r.size, r.perms});
    return out;
}

uint64_t snapshot_hash(const Snapshot& s) {
    uint64_t h = kFnvOffset;
    for (const auto& r : s.regions) {
        h = fnv1a64_u32(r.base, h);
        h = fnv1a64_u32(r.size, h);
        h = fnv1a64_u32(r.perms, h);
        h = fnv1a64(r.bytes, h);
    }
    for (uint32_t reg : s.cpu.regs) h = fnv1a64_u32(reg, h);
    h = fnv1a64_u32(s.cpu.pc, h);
    h = fnv1a64_u32((s.cpu.z ? 1u : 0u) | (s.cpu.n ? 2u : 0u) | (s.cpu.ult ? 4u : 0u), h);
    for (const auto& blob : s.aux) {
        h = fnv1a64_u32(static_cast<uint32_t>(blob.size()), h);
        h = fnv1a64(blob, h);
    }
    return h;
}

}  // namespace mrfuzz
