#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "mrfuzz/asm.hpp"
#include "mrfuzz/config.hpp"
#include "mrfuzz/coverage.hpp"
#include "mrfuzz/rng.hpp"
#include "mrfuzz/sanitizer.hpp"
#include "mrfuzz/util.hpp"
#include "mrfuzz/vm.hpp"

using namespace mrfuzz;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::vector<uint8_t> b = read_file(p);
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

// Assembles <name>.s, applies <name>.toml and snapshots the ready-to-run
// state, mirroring what the campaign setup does.
struct Target {
    HarnessConfig cfg;
    AsmResult prog;
    Machine m;
    std::optional<Sanitizer> san;
    Snapshot master;
    std::vector<CrashReport> findings;

    explicit Target(const std::string& name, bool with_san = true) {
        std::filesystem::path dir = TARGETS_DIR;
        cfg = load_config(dir / (name + ".toml"));
        prog = assemble(slurp(dir / (name + ".s")));
        apply_to_machine(cfg, m, prog.binary);
        if (with_san && cfg.sanitizer)
            san.emplace(m, cfg.sanitizer->arena, cfg.sanitizer->abi);
        master = m.snapshot();
    }

    StopReason run(std::span<const uint8_t> input) {
        m.restore(master);
        if (san) (void)san->take_findings();
        place_input(m, cfg.placement, input, cfg.input_max_len);
        StopReason r = m.run(cfg.exits, cfg.max_instructions);
        findings = san ? san->take_findings() : std::vector<CrashReport>{};
        return r;
    }

    uint8_t byte_at(uint32_t addr) const {
        uint8_t b = 0;
        const_cast<Machine&>(m).read_mem(addr, std::span<uint8_t>(&b, 1));
        return b;
    }
};

std::vector<uint8_t> bytes(std::initializer_list<int> xs) {
    std::vector<uint8_t> v;
    for (int x : xs) v.push_back(static_cast<uint8_t>(x));
    return v;
}

std::set<CrashKind> kinds_of(const std::vector<CrashReport>& fs) {
    std::set<CrashKind> s;
    for (const auto& f : fs) s.insert(f.kind);
    return s;
}

}  // namespace

TEST_CASE("t1 symbols line up with its config") {
    Target t("t1");
    CHECK(t.cfg.entry == t.prog.sym("parse_msg"));
    CHECK(t.cfg.exits == std::vector<uint32_t>{t.prog.sym("exit_stub")});
    CHECK(t.cfg.sanitizer->abi.alloc_addr == t.prog.sym("get_buffer"));
    CHECK(t.cfg.sanitizer->abi.free_addr == t.prog.sym("free_buffer"));
    CHECK(*t.cfg.init_regs[14] == t.prog.sym("exit_stub"));
    const auto& ilm = std::get<IlmPlacement>(t.cfg.placement);
    CHECK(*t.cfg.init_regs[1] == ilm.ilm_addr);
    CHECK(t.prog.origin == 0);
    CHECK(t.prog.binary.size() <= 0x1000);
}

TEST_CASE("t1 decodes the shipped seed cleanly and frees its buffers") {
    Target t("t1");
    std::vector<uint8_t> seed = read_file(std::filesystem::path(TARGETS_DIR) / "seeds/t1/valid.bin");
    REQUIRE(seed.size() == 10);

    StopReason r = t.run(seed);
    CHECK(r.kind == StopKind::ExitHit);
    CHECK(t.findings.empty());

    auto chunks = t.san->chunks();
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].size == 10);   // message copy
    CHECK(chunks[1].size == 173);  // item list
    CHECK(!chunks[0].live);
    CHECK(!chunks[1].live);

    // Two records decoded: slot 0 holds type 0x11 / "ABC", slot 1 type 0x22 /
    // "DEF", and the index byte counts both.
    uint32_t list = chunks[1].addr;
    CHECK(t.byte_at(list + 0) == 2);
    CHECK(t.byte_at(list + 1) == 0x11);
    CHECK(t.byte_at(list + 2) == 3);
    CHECK(t.byte_at(list + 3) == 'A');
    CHECK(t.byte_at(list + 5) == 'C');
    CHECK(t.byte_at(list + 43 + 1) == 0x22);
    CHECK(t.byte_at(list + 43 + 3) == 'D');
    CHECK(t.byte_at(list + 43 + 5) == 'F');
}

TEST_CASE("t1 oversized length byte reads past the message copy") {
    Target t("t1");
    // len byte 11 > 10 payload bytes: the record copy walks past the chunk.
    StopReason r = t.run(bytes({11, 0x11, 1, 2, 3, 4, 5, 6, 7, 8}));
    CHECK(r.kind == StopKind::ExitHit);  // findings never stop the run

    REQUIRE(t.findings.size() == 2);
    uint32_t msg = t.san->chunks()[0].addr;
    for (const auto& f : t.findings) {
        CHECK(f.kind == CrashKind::OobRead);
        CHECK(f.pc == t.prog.sym("payload_load"));
        CHECK(f.size == 1);
        REQUIRE(f.related_chunk.has_value());
        CHECK(*f.related_chunk == msg);
    }
    CHECK(t.findings[0].addr == msg + 10);
    CHECK(t.findings[1].addr == msg + 11);
    CHECK(t.findings[0].dedup_key == t.findings[1].dedup_key);
}

TEST_CASE("t1 fifth record writes past the item list") {
    Target t("t1");
    // Five minimal records; slots run out at four.
    StopReason r = t.run(bytes({2, 0xaa, 0xbb, 2, 0xaa, 0xbb, 2, 0xaa, 0xbb,
                                2, 0xaa, 0xbb, 2, 0xaa, 0xbb}));
    CHECK(r.kind == StopKind::ExitHit);

    REQUIRE(t.findings.size() >= 3);
    uint32_t list = t.san->chunks()[1].addr;
    const CrashReport& first = t.findings[0];
    CHECK(first.kind == CrashKind::OobWrite);
    CHECK(first.pc == t.prog.sym("slot_len_store"));
    CHECK(first.addr == list + 174);  // slot 4 starts at 172; its len byte is +174
    CHECK(*first.related_chunk == list);

    CHECK(t.findings[1].kind == CrashKind::OobWrite);
    CHECK(t.findings[1].addr == list + 173);  // type byte of slot 4

    std::set<CrashKind> ks = kinds_of(t.findings);
    CHECK(ks.count(CrashKind::OobWrite));
    CHECK(ks.count(CrashKind::OobRead));  // count byte reloads from the redzone
    for (const auto& f : t.findings) CHECK(*f.related_chunk == list);
}

TEST_CASE("t1 zero length byte wraps the payload count") {
    Target t("t1");
    // len - 1 underflows to 255, dragging the copy loop across both chunks.
    StopReason r = t.run(bytes({0x00, 0x07}));
    CHECK(r.kind == StopKind::ExitHit);

    REQUIRE(!t.findings.empty());
    uint32_t msg = t.san->chunks()[0].addr;
    const CrashReport& first = t.findings[0];
    CHECK(first.kind == CrashKind::OobRead);
    CHECK(first.pc == t.prog.sym("payload_load"));
    CHECK(first.addr == msg + 2);

    std::set<CrashKind> ks = kinds_of(t.findings);
    CHECK(ks.count(CrashKind::OobRead));
    CHECK(ks.count(CrashKind::OobWrite));   // stores cross the list redzone
    CHECK(ks.count(CrashKind::WildAccess)); // and keep going past it
}

TEST_CASE("t1 runs on its own allocator when nothing is installed") {
    Target t("t1", /*with_san=*/false);
    std::vector<uint8_t> seed = read_file(std::filesystem::path(TARGETS_DIR) / "seeds/t1/valid.bin");
    StopReason r = t.run(seed);
    CHECK(r.kind == StopKind::ExitHit);

    // Bump allocator: message copy at the heap base, list right behind it.
    uint32_t heap = 0x11000;
    uint32_t list = heap + 10;
    CHECK(t.byte_at(list + 0) == 2);
    CHECK(t.byte_at(list + 1) == 0x11);
    CHECK(t.byte_at(list + 43 + 1) == 0x22);
    uint32_t cursor = 0;
    {
        uint8_t w[4];
        t.m.read_mem(0x10600, w);
        cursor = static_cast<uint32_t>(w[0]) | (w[1] << 8) | (w[2] << 16) | (w[3] << 24);
    }
    CHECK(cursor == heap + 10 + 173);
}

TEST_CASE("t1 stays inside its instruction budget on degenerate input") {
    Target t("t1");
    std::vector<uint8_t> zeros(1024, 0x00);
    StopReason r = t.run(zeros);
    CHECK(r.kind == StopKind::ExitHit);
    CHECK(r.instructions < t.cfg.max_instructions);
    CHECK(!t.findings.empty());
}

// ---- quad-parser ----

namespace {

// Reference implementations of the four decoders' result registers.
uint32_t tlv_oracle(std::span<const uint8_t> p) {
    if (p.size() < 2 || p[0] != 'T' || p[1] != 'L') return 0xbad;
    uint32_t i = 2, acc = 0, count = 0;
    uint32_t len = static_cast<uint32_t>(p.size());
    while (i + 2 <= len) {
        uint8_t tag = p[i], vl = p[i + 1];
        i += 2;
        if (i + vl > len) break;
        ++count;
        switch (tag) {
            case 1:
                for (uint32_t j = 0; j < vl; ++j) acc += p[i + j];
                break;
            case 2:
                for (uint32_t j = 0; j < vl; ++j) acc ^= p[i + j];
                break;
            case 3:
                if (vl) acc = (acc << 1) + p[i];
                break;
            case 4: acc += 16; break;
            case 5: acc += (vl & 1) ? 3 : 7; break;
            case 6:
                for (uint32_t j = 0; j < vl; ++j) acc += 2u * p[i + j];
                break;
            default: break;
        }
        i += vl;
    }
    return (count << 16) | (acc & 0xffff);
}

uint32_t fix_oracle(std::span<const uint8_t> p) {
    if (p.empty() || p[0] != 'F') return 0xbad;
    uint32_t acc = 0, recs = 0, i = 1;
    uint32_t len = static_cast<uint32_t>(p.size());
    while (i + 6 <= len) {
        uint8_t kind = p[i], a = p[i + 1];
        uint32_t b = p[i + 2] | (static_cast<uint32_t>(p[i + 3]) << 8);
        ++recs;
        if (kind == 0) acc += a + b;
        else if (kind == 1) acc -= a + b;
        else if (kind == 2) acc ^= (static_cast<uint32_t>(a) << 4) ^ b;
        else if (kind == 3) acc += (a < b) ? 2 : 1;
        else break;
        i += 6;
    }
    return (recs << 16) | (acc & 0xffff);
}

uint32_t bits_oracle(std::span<const uint8_t> p) {
    if (p.empty() || p[0] != 'B') return 0xbad;
    uint32_t score = 0, maxrun = 0, run = 0;
    for (size_t i = 1; i < p.size(); ++i) {
        for (int bit = 0; bit < 8; ++bit) {
            if ((p[i] >> bit) & 1) {
                ++score;
                ++run;
                if (run > maxrun) maxrun = run;
            } else {
                run = 0;
            }
        }
        uint8_t nib = p[i] & 0x0f;
        score += nib < 4 ? 1 : nib < 8 ? 2 : nib < 12 ? 3 : 4;
    }
    return (maxrun << 16) | (score & 0xffff);
}

uint32_t scan_oracle(std::span<const uint8_t> p) {
    if (p.empty() || p[0] != 'S') return 0xbad;
    uint32_t words = 0, digits = 0;
    bool in_word = false;
    for (size_t i = 1; i < p.size(); ++i) {
        uint8_t c = p[i];
        bool w = false;
        if (c >= '0' && c <= '9') {
            digits += c - '0';
            w = true;
        } else if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
            w = true;
        }
        if (w) {
            if (!in_word) {
                in_word = true;
                ++words;
            }
        } else {
            in_word = false;
        }
    }
    return (words << 16) | (digits & 0xffff);
}

std::vector<uint8_t> seed_file(const char* rel) {
    return read_file(std::filesystem::path(TARGETS_DIR) / "seeds" / rel);
}

// Run one input under a given message id, collecting block-edge coverage.
struct T2Bed {
    Target t{"t2"};

    StopReason run_as(uint16_t msg_id, std::span<const uint8_t> input, CoverageMap* cov = nullptr) {
        uint64_t hook = 0;
        if (cov) {
            cov->begin_run();
            hook = t.m.add_hook(HookKind::BlockEntry, 0, 0xffffffff,
                                [cov](Machine&, uint32_t pc, uint32_t, uint32_t, uint32_t) {
                                    cov->record_block(pc);
                                });
        }
        t.m.restore(t.master);
        Placement p = t.cfg.placement;
        std::get<IlmPlacement>(p).msg_id = msg_id;
        place_input(t.m, p, input, t.cfg.input_max_len);
        StopReason r = t.m.run(t.cfg.exits, t.cfg.max_instructions);
        if (cov) t.m.remove_hook(hook);
        return r;
    }

    uint32_t result() { return t.m.cpu().regs[1]; }
};

}  // namespace

TEST_CASE("t2 symbols line up with its config and candidates") {
    Target t("t2");
    CHECK(t.cfg.entry == t.prog.sym("dispatch"));
    CHECK(t.cfg.exits == std::vector<uint32_t>{t.prog.sym("exit_stub")});
    CHECK(!t.cfg.sanitizer);
    REQUIRE(t.cfg.candidates.size() == 4);
    CHECK(t.cfg.candidates[0].name == "tlv");
    CHECK(*t.cfg.candidates[0].msg_id == 0x0101);
    CHECK(*t.cfg.candidates[3].msg_id == 0x0104);
    CHECK(t.prog.sym("decode_tlv") == 0x100);
    CHECK(t.prog.binary.size() <= 0x1000);
}

TEST_CASE("t2 decoders agree with their reference implementations") {
    T2Bed bed;
    auto tlv = seed_file("t2/tlv.bin");
    auto fix = seed_file("t2/fix.bin");
    auto bits = seed_file("t2/bits.bin");
    auto scan = seed_file("t2/scan.bin");

    CHECK(bed.run_as(0x0101, tlv).kind == StopKind::ExitHit);
    CHECK(bed.result() == tlv_oracle(tlv));
    CHECK((bed.result() >> 16) == 5);  // the seed carries five entries

    CHECK(bed.run_as(0x0102, fix).kind == StopKind::ExitHit);
    CHECK(bed.result() == fix_oracle(fix));
    CHECK((bed.result() >> 16) == 3);

    CHECK(bed.run_as(0x0103, bits).kind == StopKind::ExitHit);
    CHECK(bed.result() == bits_oracle(bits));

    CHECK(bed.run_as(0x0104, scan).kind == StopKind::ExitHit);
    CHECK(bed.result() == scan_oracle(scan));
    CHECK((bed.result() >> 16) == 4);  // "hello", "42", "WORLD", "x9"
    CHECK((bed.result() & 0xffff) == 15);

    // The oracles must also agree on adversarial inputs.
    Xoshiro256ss rng(99);
    for (int it = 0; it < 200; ++it) {
        std::vector<uint8_t> buf(rng.below(64));
        for (auto& b : buf) b = rng.byte();
        if (!buf.empty()) buf[0] = "TFBS"[it % 4];
        if (buf.size() >= 2 && it % 4 == 0) buf[1] = 'L';
        uint16_t id = static_cast<uint16_t>(0x0101 + it % 4);
        REQUIRE(bed.run_as(id, buf).kind == StopKind::ExitHit);
        uint32_t want = it % 4 == 0   ? tlv_oracle(buf)
                        : it % 4 == 1 ? fix_oracle(buf)
                        : it % 4 == 2 ? bits_oracle(buf)
                                      : scan_oracle(buf);
        REQUIRE(bed.result() == want);
    }
}

TEST_CASE("t2 rejects mismatched and unknown message ids") {
    T2Bed bed;
    auto tlv = seed_file("t2/tlv.bin");
    CHECK(bed.run_as(0x0102, tlv).kind == StopKind::ExitHit);
    CHECK(bed.result() == 0xbad);  // 'T' fails the 'F' magic check
    CHECK(bed.run_as(0x0105, tlv).kind == StopKind::ExitHit);
    CHECK(bed.result() == 0xdead);
    CHECK(bed.run_as(0x0000, tlv).kind == StopKind::ExitHit);
    CHECK(bed.result() == 0xdead);
}

TEST_CASE("t2 decoders cover disjoint code when fed their own seeds") {
    T2Bed bed;
    const char* names[4] = {"t2/tlv.bin", "t2/fix.bin", "t2/bits.bin", "t2/scan.bin"};
    std::vector<std::set<uint32_t>> edges(4);
    for (int k = 0; k < 4; ++k) {
        CoverageMap cov(65536);
        auto seed = seed_file(names[k]);
        REQUIRE(bed.run_as(static_cast<uint16_t>(0x0101 + k), seed, &cov).kind ==
                StopKind::ExitHit);
        auto e = cov.edge_set();
        edges[k] = std::set<uint32_t>(e.begin(), e.end());
        CHECK(edges[k].size() >= 20);
    }
    // Each decoder contributes at least 20 edges of its own; overlap is
    // limited to the shared dispatch prologue.
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            if (a == b) continue;
            size_t own = 0;
            for (uint32_t e : edges[a])
                if (!edges[b].count(e)) ++own;
            CHECK(own >= 20);
        }
    }
}

TEST_CASE("t2 wrong-decoder runs produce shallow coverage") {
    T2Bed bed;
    auto tlv = seed_file("t2/tlv.bin");
    CoverageMap right(65536), wrong(65536);
    bed.run_as(0x0101, tlv, &right);
    bed.run_as(0x0103, tlv, &wrong);  // bit counter rejects the 'T' magic
    CHECK(right.edge_count() >= 20);
    CHECK(wrong.edge_count() < 15);
    CHECK(wrong.edge_count() >= 3);  // dispatch chain still runs
}

// ---- alloc-abuse ----

TEST_CASE("t3 symbols line up with its config") {
    Target t("t3");
    CHECK(t.cfg.entry == t.prog.sym("handle_cmd"));
    CHECK(t.cfg.exits == std::vector<uint32_t>{t.prog.sym("exit_stub")});
    CHECK(t.cfg.sanitizer->abi.alloc_addr == t.prog.sym("get_buffer"));
    CHECK(t.cfg.sanitizer->abi.free_addr == t.prog.sym("free_buffer"));
    const auto& raw = std::get<RawPlacement>(t.cfg.placement);
    CHECK(*t.cfg.init_regs[1] == raw.buffer_addr);
    CHECK(*raw.len_reg == 2);
}

TEST_CASE("t3 clean command allocates, uses and frees") {
    Target t("t3");
    std::vector<uint8_t> seed = seed_file("t3/clean.bin");
    StopReason r = t.run(seed);
    CHECK(r.kind == StopKind::ExitHit);
    CHECK(t.findings.empty());
    auto chunks = t.san->chunks();
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].size == 24);
    CHECK(!chunks[0].live);
    CHECK(t.byte_at(chunks[0].addr) == 0x5a);
}

TEST_CASE("t3 empty input takes the early-out") {
    Target t("t3");
    StopReason r = t.run(std::vector<uint8_t>{});
    CHECK(r.kind == StopKind::ExitHit);
    CHECK(t.findings.empty());
    CHECK(t.san->chunks().empty());
}

TEST_CASE("t3 command bytes map onto the four heap-misuse classes") {
    Target t("t3");

    StopReason r = t.run(bytes({'U'}));
    CHECK(r.kind == StopKind::ExitHit);
    REQUIRE(t.findings.size() == 1);
    uint32_t chunk = t.san->chunks()[0].addr;
    CHECK(t.findings[0].kind == CrashKind::UseAfterFreeWrite);
    CHECK(t.findings[0].pc == t.prog.sym("uaf_w_site"));
    CHECK(t.findings[0].addr == chunk + 4);
    CHECK(*t.findings[0].related_chunk == chunk);

    r = t.run(bytes({'u'}));
    REQUIRE(t.findings.size() == 1);
    CHECK(t.findings[0].kind == CrashKind::UseAfterFreeRead);
    CHECK(t.findings[0].pc == t.prog.sym("uaf_r_site"));

    r = t.run(bytes({'D'}));
    REQUIRE(t.findings.size() == 1);
    CHECK(t.findings[0].kind == CrashKind::DoubleFree);
    CHECK(t.findings[0].pc == t.prog.sym("df_site"));  // reported at the call site
    CHECK(t.findings[0].addr == t.san->chunks()[0].addr);

    r = t.run(bytes({'I'}));
    REQUIRE(t.findings.size() == 1);
    CHECK(t.findings[0].kind == CrashKind::InvalidFree);
    CHECK(t.findings[0].pc == t.prog.sym("if_site"));
    CHECK(t.findings[0].addr == 0x10f00);

    // distinct bug classes, distinct dedup keys; reruns reproduce the key
    std::set<uint64_t> keys;
    for (int cmd : {'U', 'u', 'D', 'I'}) {
        t.run(bytes({cmd}));
        keys.insert(t.findings.at(0).dedup_key);
        uint64_t first = t.findings.at(0).dedup_key;
        t.run(bytes({cmd}));
        CHECK(t.findings.at(0).dedup_key == first);
    }
    CHECK(keys.size() == 4);
}
