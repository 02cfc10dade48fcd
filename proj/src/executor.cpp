#include "mrfuzz/executor.hpp"

#include <algorithm>

namespace mrfuzz {

const char* run_class_name(RunClass c) {
    switch (c) {
        case RunClass::Clean: return "clean";
        case RunClass::Crash: return "crash";
        case RunClass::Hang: return "hang";
    }
    return "?";
}

RunClass classify_run(const RunOutcome& o) {
    if (o.skipped) return RunClass::Clean;
    if (!o.validated) return RunClass::Clean;
    if (!o.findings.empty() || o.stop.is_fault()) return RunClass::Crash;
    if (o.stop.kind == StopKind::BudgetExceeded || o.stop.kind == StopKind::HookAbort)
        return RunClass::Hang;
    return RunClass::Clean;
}

uint64_t crash_dedup_key(const RunOutcome& o, uint32_t last_block_pc) {
    if (classify_run(o) != RunClass::Crash) return 0;
    if (!o.findings.empty()) return o.findings.front().dedup_key;
    // Offset the stop kind so guest faults can never collide with the
    // sanitizer's CrashKind-based keys.
    uint64_t h = fnv1a64_u32(0x100u + static_cast<uint32_t>(o.stop.kind), kFnvOffset);
    h = fnv1a64_u32(o.stop.pc_at_stop, h);
    return fnv1a64_u32(last_block_pc, h);
}

Campaign::Campaign(Machine& m, HarnessSpec spec, Sanitizer* sanitizer, size_t map_size)
    : m_machine(m),
      m_spec(std::move(spec)),
      m_sanitizer(sanitizer),
      m_run_map(map_size),
      m_seen(map_size, 0),
      m_classified(map_size, 0) {
    m_cov_hook = m_machine.add_hook(
        HookKind::BlockEntry, 0, 0xffffffff,
        [this](Machine&, uint32_t pc, uint32_t, uint32_t, uint32_t) {
            m_run_map.record_block(pc);
        });
    m_master = m_machine.snapshot();
}

Campaign::~Campaign() {
    m_machine.remove_hook(m_cov_hook);
    // Leave the machine as the campaign found it, so another campaign (e.g.
    // the next deduction candidate) can snapshot a clean master.
    try {
        m_machine.restore(m_master);
    } catch (...) {
        // Region set changed under us; nothing sane to restore onto.
    }
}

void Campaign::reset_guest() {
    if (m_spec.persistent_iters == 0 || m_iters_since_restore == 0) {
        m_machine.restore(m_master);
        ++m_full_restores;
    } else {
        m_machine.reset_dirty_regions(m_master, {});
        if (m_sanitizer) m_sanitizer->reset();
    }
    if (m_spec.persistent_iters > 0)
        m_iters_since_restore = (m_iters_since_restore + 1) % m_spec.persistent_iters;
}

RunOutcome Campaign::run_one(std::span<const uint8_t> input) {
    RunOutcome out;
    reset_guest();
    m_machine.cpu().pc = m_spec.entry;  // candidates may override the staged pc
    if (m_sanitizer) m_sanitizer->take_findings();  // drop leftovers from manual use

    out.placed_len = static_cast<uint32_t>(
        std::min<size_t>(input.size(), m_spec.input_max_len));
    bool accepted = m_place ? m_place(m_machine, input)
                            : (place_input(m_machine, m_spec.placement, input,
                                           m_spec.input_max_len),
                               true);
    if (!accepted) {
        out.skipped = true;
        return out;
    }

    m_run_map.clear();
    m_run_map.begin_run();
    auto t0 = std::chrono::steady_clock::now();
    out.stop = m_machine.run(m_spec.exits, m_spec.max_instructions);
    out.exec_time = std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::steady_clock::now() - t0);
    if (m_sanitizer) out.findings = m_sanitizer->take_findings();

    m_run_map.classify_into(m_classified);
    out.interesting = accumulate_new_bits(m_seen, m_classified);

    if (m_validate) {
        RunClass cls = classify_run(out);
        if (cls == RunClass::Crash) {
            out.validated = m_validate(m_machine, out);
        } else if (cls == RunClass::Clean && m_spec.always_validate) {
            m_validate(m_machine, out);
        }
    }

    ++m_execs;
    return out;
}

}  // namespace mrfuzz
