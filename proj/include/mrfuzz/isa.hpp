#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace mrfuzz {

// Guest ISA: fixed 4-byte little-endian instructions, byte fields [op][A][B][C].
// imm16 = B | C<<8; simm8 = C sign-extended. 16 general registers; r13 is the
// stack pointer and r14 the link register by convention only. Flags {Z, N, ULT}
// change only via CMP/SUB. Branch/call displacements are in words relative to
// the next instruction: target = pc + 4 + simm16*4.
enum class Op : uint8_t {
    Halt = 0x00,
    Movi = 0x01,   // rd=A, imm16 (zero-extend)
    Movhi = 0x02,  // rd=A, imm16 into bits 31:16, low half kept
    Mov = 0x03,    // rd=A, rs=B
    Add = 0x04,    // rd=A, rs=B, rt=C
    Sub = 0x05,    // rd=A, rs=B, rt=C (sets flags)
    And = 0x06,
    Or = 0x07,
    Xor = 0x08,
    Shl = 0x09,    // rd=A, rs=B, imm5=C
    Shr = 0x0a,    // logical
    Addi = 0x0b,   // rd=A, rs=B, simm8
    Ldb = 0x0c,    // rd=A, [rs=B + simm8] (zero-extend)
    Stb = 0x0d,    // src=A, [rs=B + simm8]
    Ldw = 0x0e,
    Stw = 0x0f,
    Cmp = 0x10,    // rs=A, rt=B
    B = 0x11,      // cc=A, imm16 (word displacement)
    Call = 0x12,   // imm16 (word displacement), lr <- pc+4
    Callr = 0x13,  // rs=A, lr <- pc+4
    Ret = 0x14,    // pc <- lr
    Ecall = 0x15,  // n=A. n=0: emit low byte of r1. n=1: halt with exit code r1.
};

constexpr uint8_t kOpMax = 0x15;

// Branch condition codes (field A of B).
enum class Cc : uint8_t { Al = 0, Eq = 1, Ne = 2, Ult = 3, Uge = 4, Slt = 5, Sge = 6 };
constexpr uint8_t kCcMax = 6;

constexpr int kNumRegs = 16;
constexpr int kRegSp = 13;
constexpr int kRegLr = 14;
constexpr uint32_t kInsnSize = 4;

struct Insn {
    Op op;
    uint8_t a, b, c;

    uint16_t imm16() const { return static_cast<uint16_t>(b | (c << 8)); }
    int32_t simm16() const { return static_cast<int16_t>(imm16()); }
    int32_t simm8() const { return static_cast<int8_t>(c); }
};

inline uint32_t encode(Op op, uint8_t a = 0, uint8_t b = 0, uint8_t c = 0) {
    return static_cast<uint32_t>(op) | (static_cast<uint32_t>(a) << 8) |
           (static_cast<uint32_t>(b) << 16) | (static_cast<uint32_t>(c) << 24);
}

inline uint32_t encode_imm16(Op op, uint8_t a, uint16_t imm) {
    return encode(op, a, static_cast<uint8_t>(imm), static_cast<uint8_t>(imm >> 8));
}

// Strict decode: rejects unknown opcodes, out-of-range register fields,
// condition codes > 6, shift amounts > 31 and ECALL numbers > 1, so stray
// data executed as code faults instead of doing something arbitrary.
std::optional<Insn> decode(uint32_t word);

const char* cc_name(Cc cc);

// One-operand-style text used by traces, e.g. "MOVI r1, 5", "LDW r3, [r2, 4]",
// "B AL, -4" (signed byte displacement), "CALL 0x120" (absolute target).
std::string disasm(const Insn& insn, uint32_t pc);

}  // namespace mrfuzz
