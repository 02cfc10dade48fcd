#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <memory>
#include <string>

#include "mrfuzz/asm.hpp"
#include "mrfuzz/sanitizer.hpp"
#include "mrfuzz/vm.hpp"

using namespace mrfuzz;

namespace {

constexpr uint32_t kArena = 0x100000;

// A tiny guest with an interceptable allocator pair. The stub bodies are RET
// so the program still terminates if no sanitizer is installed.
struct SanBed {
    Machine m;
    AsmResult prog;
    std::unique_ptr<Sanitizer> san;

    explicit SanBed(const std::string& body, uint32_t arena_size = 0x10000) {
        prog = assemble(std::string(R"(
            .org 0x0
                b al, main
            alloc_stub:
                ret
            free_stub:
                ret
            main:
        )") + body + "\nhalt\n");
        m.map_region(0x0, 0x1000, kPermR | kPermX);
        m.map_region(kArena, 0x10000, kPermR | kPermW);
        m.write_mem(0, prog.binary);
        san = std::make_unique<Sanitizer>(
            m, ArenaConfig{kArena, arena_size},
            AllocAbi{prog.sym("alloc_stub"), prog.sym("free_stub")});
    }

    StopReason run() {
        m.cpu().pc = 0;
        return m.run({}, 100000);
    }
};

}  // namespace

TEST_CASE("redzone width is proportional with floor 16 and cap 256") {
    CHECK(redzone_policy(1) == 16);
    CHECK(redzone_policy(40) == 16);
    CHECK(redzone_policy(64) == 16);
    CHECK(redzone_policy(65) == 16);  // 65/4 = 16, already a multiple of 16
    CHECK(redzone_policy(68) == 32);  // 68/4 = 17, rounds up
    CHECK(redzone_policy(128) == 32);
    CHECK(redzone_policy(173) == 48);
    CHECK(redzone_policy(1024) == 256);
    CHECK(redzone_policy(100000) == 256);
}

TEST_CASE("installation validates the arena and the allocator abi") {
    Machine m;
    m.map_region(0x0, 0x1000, kPermR | kPermX);
    m.map_region(kArena, 0x10000, kPermR | kPermW);
    m.map_region(0x200000, 0x1000, kPermR);  // no write perm

    auto expect = [&](ArenaConfig a, AllocAbi abi, Err want) {
        try {
            Sanitizer s(m, a, abi);
            FAIL("expected install to fail");
        } catch (const Error& e) {
            CHECK(e.code() == want);
        }
    };
    expect({0x900000, 0x1000}, {0x0, 0x4}, Err::ArenaUnmapped);       // unmapped arena
    expect({0x200000, 0x1000}, {0x0, 0x4}, Err::ArenaUnmapped);      // read-only arena
    expect({kArena, 0x10000}, {0x900000, 0x4}, Err::AbiInvalid);     // alloc unmapped
    expect({kArena, 0x10000}, {0x0, kArena}, Err::AbiInvalid);       // free not executable
    AllocAbi bad_reg{0x0, 0x4};
    bad_reg.size_reg = 16;
    expect({kArena, 0x10000}, bad_reg, Err::AbiInvalid);

    Sanitizer first(m, {kArena, 0x10000}, {0x0, 0x4});
    expect({kArena, 0x10000}, {0x0, 0x4}, Err::AlreadyInstalled);
}

TEST_CASE("a fresh arena is fully poisoned: any touch is a wild access") {
    SanBed t(R"(
        la r2, 0x100000
        ldb r3, [r2]
    )");
    CHECK(t.run().kind == StopKind::Halt);
    REQUIRE(t.san->findings().size() == 1);
    const CrashReport& r = t.san->findings()[0];
    CHECK(r.kind == CrashKind::WildAccess);
    CHECK(r.addr == kArena);
    CHECK_FALSE(r.related_chunk.has_value());
}

TEST_CASE("in-bounds use of a live chunk is silent") {
    SanBed t(R"(
        movi r1, 40
        call alloc_stub
        mov r2, r1
        movi r3, 0x55
        stb r3, [r2]
        stb r3, [r2, 39]
        ldb r4, [r2, 39]
        ldw r5, [r2, 16]
    )");
    CHECK(t.run().kind == StopKind::Halt);
    CHECK(t.san->findings().empty());
    CHECK(t.m.cpu().regs[4] == 0x55);
    // fresh chunks read back zeroed
    CHECK(t.m.cpu().regs[5] == 0);
    auto chunks = t.san->chunks();
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].addr == kArena);
    CHECK(chunks[0].size == 40);
    CHECK(chunks[0].live);
}

TEST_CASE("the first byte past a chunk is an out-of-bounds access") {
    SanBed t(R"(
        movi r1, 40
        call alloc_stub
        mov r2, r1
        movi r3, 0x55
        oob_w: stb r3, [r2, 40]
        oob_r: ldb r4, [r2, 41]
    )");
    CHECK(t.run().kind == StopKind::Halt);
    REQUIRE(t.san->findings().size() == 2);
    const auto& w = t.san->findings()[0];
    CHECK(w.kind == CrashKind::OobWrite);
    CHECK(w.pc == t.prog.sym("oob_w"));
    CHECK(w.addr == kArena + 40);
    CHECK(w.size == 1);
    CHECK(w.related_chunk == kArena);
    const auto& r = t.san->findings()[1];
    CHECK(r.kind == CrashKind::OobRead);
    CHECK(r.pc == t.prog.sym("oob_r"));
    CHECK(r.addr == kArena + 41);
    CHECK(r.related_chunk == kArena);
    CHECK(w.dedup_key != r.dedup_key);
}

TEST_CASE("zero-size allocations clamp to one byte") {
    SanBed t(R"(
        movi r1, 0
        call alloc_stub
        mov r2, r1
        stb r0, [r2]       ; byte 0 is in bounds
        ldb r4, [r2, 1]    ; byte 1 is the redzone
    )");
    CHECK(t.run().kind == StopKind::Halt);
    REQUIRE(t.san->findings().size() == 1);
    CHECK(t.san->findings()[0].kind == CrashKind::OobRead);
    CHECK(t.san->chunks()[0].size == 1);
}

TEST_CASE("freed chunks stay poisoned: use-after-free in both directions") {
    SanBed t(R"(
        movi r1, 8
        call alloc_stub
        mov r2, r1
        call free_stub      ; r1 still holds the chunk
        uaf_r: ldb r3, [r2]
        uaf_w: stb r3, [r2, 4]
    )");
    CHECK(t.run().kind == StopKind::Halt);
    REQUIRE(t.san->findings().size() == 2);
    CHECK(t.san->findings()[0].kind == CrashKind::UseAfterFreeRead);
    CHECK(t.san->findings()[0].pc == t.prog.sym("uaf_r"));
    CHECK(t.san->findings()[0].addr == kArena);
    CHECK(t.san->findings()[0].related_chunk == kArena);
    CHECK(t.san->findings()[1].kind == CrashKind::UseAfterFreeWrite);
    CHECK(t.san->findings()[1].addr == kArena + 4);
}

TEST_CASE("double free and invalid free report the calling site") {
    SanBed t(R"(
        movi r1, 8
        call alloc_stub
        call free_stub
        df_site: call free_stub
        la r1, 0x123456
        if_site: call free_stub
        movi r1, 0
        nf_site: call free_stub
    )");
    CHECK(t.run().kind == StopKind::Halt);
    REQUIRE(t.san->findings().size() == 3);
    const auto& df = t.san->findings()[0];
    CHECK(df.kind == CrashKind::DoubleFree);
    CHECK(df.pc == t.prog.sym("df_site"));
    CHECK(df.addr == kArena);
    CHECK(df.related_chunk == kArena);
    const auto& inv = t.san->findings()[1];
    CHECK(inv.kind == CrashKind::InvalidFree);
    CHECK(inv.pc == t.prog.sym("if_site"));
    CHECK(inv.addr == 0x123456);
    CHECK_FALSE(inv.related_chunk.has_value());
    CHECK(t.san->findings()[2].kind == CrashKind::InvalidFree);  // free(0)
    // the double-freed chunk stays freed and poisoned
    CHECK_FALSE(t.san->chunks()[0].live);
}

TEST_CASE("bump allocation never reuses freed space and is deterministic") {
    const char* body = R"(
        movi r1, 8
        call alloc_stub
        call free_stub
        movi r1, 40
        call alloc_stub
        mov r2, r1
        movi r1, 1
        call alloc_stub
        mov r3, r1
        movi r1, 0
        call alloc_stub
        mov r4, r1
    )";
    SanBed t(body);
    CHECK(t.run().kind == StopKind::Halt);
    auto chunks = t.san->chunks();
    REQUIRE(chunks.size() == 4);
    CHECK(chunks[0].addr == kArena);           // 8 + rz 16 -> cursor 24
    CHECK(chunks[1].addr == kArena + 32);      // aligned up from 24
    CHECK(chunks[2].addr == kArena + 96);      // 32+40+16 = 88 -> 96
    CHECK(chunks[3].addr == kArena + 128);     // 96+1+16 = 113 -> 128
    CHECK(t.m.cpu().regs[2] == kArena + 32);
    CHECK(t.san->bytes_used() == 145);

    // same request stream after reset lands on identical addresses
    t.san->reset();
    CHECK(t.run().kind == StopKind::Halt);
    auto again = t.san->chunks();
    REQUIRE(again.size() == 4);
    for (size_t i = 0; i < 4; ++i) CHECK(again[i].addr == chunks[i].addr);
}

TEST_CASE("alignment gaps between chunks are treated as underflow of the next chunk") {
    SanBed t(R"(
        movi r1, 8
        call alloc_stub
        movi r1, 8
        call alloc_stub
        mov r2, r1
        gap_r: ldb r3, [r2, -4]   ; 4 bytes before chunk 2: alignment gap
    )");
    CHECK(t.run().kind == StopKind::Halt);
    REQUIRE(t.san->findings().size() == 1);
    const auto& f = t.san->findings()[0];
    CHECK(f.kind == CrashKind::OobRead);
    CHECK(f.related_chunk == kArena + 32);
    CHECK(f.addr == kArena + 28);
}

TEST_CASE("every redzone offset is caught; the first byte of the next chunk is the blind spot") {
    // 48-byte chunks make the next chunk start exactly at size + redzone(48)=16,
    // the documented detection limit of redzone-based checking.
    SanBed t(R"(
        movi r1, 48
        call alloc_stub
        mov r2, r1
        movi r1, 48
        call alloc_stub
        mov r3, r1
        movi r4, 48
        movi r7, 65
        movi r6, 0xaa
    probe:
        add r5, r2, r4
        stb r6, [r5]
        addi r4, r4, 1
        cmp r4, r7
        b ult, probe
    )");
    CHECK(t.run().kind == StopKind::Halt);
    auto chunks = t.san->chunks();
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[1].addr == chunks[0].addr + 64);  // no alignment gap
    // offsets 48..63 all hit the redzone; offset 64 lands in chunk 2, undetected
    REQUIRE(t.san->findings().size() == 16);
    for (uint32_t i = 0; i < 16; ++i) {
        CHECK(t.san->findings()[i].kind == CrashKind::OobWrite);
        CHECK(t.san->findings()[i].addr == kArena + 48 + i);
        CHECK(t.san->findings()[i].related_chunk == kArena);
    }
}

TEST_CASE("a word access straddling the chunk end reports its first poisoned byte") {
    SanBed t(R"(
        movi r1, 40
        call alloc_stub
        mov r2, r1
        stw r3, [r2, 38]   ; bytes 38,39 in bounds; 40,41 poisoned
    )");
    CHECK(t.run().kind == StopKind::Halt);
    REQUIRE(t.san->findings().size() == 1);
    CHECK(t.san->findings()[0].addr == kArena + 40);
    CHECK(t.san->findings()[0].size == 4);
}

TEST_CASE("arena exhaustion aborts the run as out-of-memory, not a finding") {
    SanBed t(R"(
        movi r1, 0x0f00
        call alloc_stub
        mov r2, r1
        movi r1, 16
        call alloc_stub
        mov r3, r1
    )",
             0x1000);
    StopReason s = t.run();
    CHECK(s.kind == StopKind::HookAbort);
    CHECK(s.abort_code == kAbortOutOfMemory);
    CHECK(t.san->findings().empty());
    CHECK(t.m.cpu().regs[1] == 0);  // failed allocation returns null
    CHECK(t.m.cpu().regs[3] == 0);  // never reached
}

TEST_CASE("reset clears the ledger so stale pointers become wild, not UAF") {
    SanBed t(R"(
        movi r1, 8
        call alloc_stub
    )");
    CHECK(t.run().kind == StopKind::Halt);
    CHECK(t.san->chunks().size() == 1);

    t.san->reset();
    t.san->reset();  // idempotent
    CHECK(t.san->chunks().empty());
    CHECK(t.san->bytes_used() == 0);

    SanBed reader(R"(
        la r2, 0x100000
        ldb r3, [r2]
    )");
    CHECK(reader.run().kind == StopKind::Halt);
    CHECK(reader.san->findings()[0].kind == CrashKind::WildAccess);
}

TEST_CASE("snapshots capture and restore the heap ledger and poison state") {
    SanBed t(R"(
        movi r1, 8
        call alloc_stub
        mov r2, r1
        call free_stub
    )");
    t.m.cpu().pc = 0;
    Snapshot master = t.m.snapshot();
    uint64_t h = snapshot_hash(master);

    CHECK(t.run().kind == StopKind::Halt);
    CHECK(t.san->chunks().size() == 1);
    CHECK(snapshot_hash(t.m.snapshot()) != h);

    t.m.restore(master);
    CHECK(snapshot_hash(t.m.snapshot()) == h);
    CHECK(t.san->chunks().empty());
    CHECK(t.san->bytes_used() == 0);

    // mid-state snapshot restores a live chunk and its poison layout
    SanBed u(R"(
        movi r1, 8
        call alloc_stub
        mov r2, r1
    )");
    CHECK(u.run().kind == StopKind::Halt);
    Snapshot with_chunk = u.m.snapshot();
    u.san->reset();
    u.m.restore(with_chunk);
    auto chunks = u.san->chunks();
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].addr == kArena);
    CHECK(chunks[0].live);
}

TEST_CASE("findings serialize as stable JSON lines") {
    CrashReport r;
    r.kind = CrashKind::OobWrite;
    r.pc = 0x104;
    r.addr = 0x20028;
    r.size = 4;
    r.related_chunk = 0x20000;
    r.dedup_key = 0x1122334455667788ull;
    CHECK(r.to_json() ==
          "{\"kind\":\"OobWrite\",\"pc\":\"0x104\",\"addr\":\"0x20028\",\"size\":4,"
          "\"related_chunk\":\"0x20000\",\"dedup_key\":\"1122334455667788\"}");

    CrashReport w;
    w.kind = CrashKind::WildAccess;
    w.pc = 0x8;
    w.addr = 0x100000;
    w.size = 1;
    w.dedup_key = 1;
    CHECK(w.to_json() ==
          "{\"kind\":\"WildAccess\",\"pc\":\"0x8\",\"addr\":\"0x100000\",\"size\":1,"
          "\"related_chunk\":null,\"dedup_key\":\"0000000000000001\"}");
}
