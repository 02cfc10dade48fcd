#include "mrfuzz/isa.hpp"

#include "mrfuzz/util.hpp"

namespace mrfuzz {

std::optional<Insn> decode(uint32_t word) {
    Insn insn{static_cast<Op>(word & 0xff), static_cast<uint8_t>(word >> 8),
              static_cast<uint8_t>(word >> 16), static_cast<uint8_t>(word >> 24)};
    if (static_cast<uint8_t>(insn.op) > kOpMax) return std::nullopt;

    auto reg_ok = [](uint8_t r) { return r < kNumRegs; };
    switch (insn.op) {
        case Op::Halt:
        case Op::Ret:
            break;
        case Op::Movi:
        case Op::Movhi:
            if (!reg_ok(insn.a)) return std::nullopt;
            break;
        case Op::Mov:
            if (!reg_ok(insn.a) || !reg_ok(insn.b)) return std::nullopt;
            break;
        case Op::Add:
        case Op::Sub:
        case Op::And:
        case Op::Or:
        case Op::Xor:
            if (!reg_ok(insn.a) || !reg_ok(insn.b) || !reg_ok(insn.c)) return std::nullopt;
            break;
        case Op::Shl:
        case Op::Shr:
            if (!reg_ok(insn.a) || !reg_ok(insn.b) || insn.c > 31) return std::nullopt;
            break;
        case Op::Addi:
        case Op::Ldb:
        case Op::Stb:
        case Op::Ldw:
        case Op::Stw:
            if (!reg_ok(insn.a) || !reg_ok(insn.b)) return std::nullopt;
            break;
        case Op::Cmp:
            if (!reg_ok(insn.a) || !reg_ok(insn.b)) return std::nullopt;
            break;
        case Op::B:
            if (insn.a > kCcMax) return std::nullopt;
            break;
        case Op::Call:
            break;
        case Op::Callr:
            if (!reg_ok(insn.a)) return std::nullopt;
            break;
        case Op::Ecall:
            if (insn.a > 1) return std::nullopt;
            break;
    }
    return insn;
}

const char* cc_name(Cc cc) {
    switch (cc) {
        case Cc::Al: return "AL";
        case Cc::Eq: return "EQ";
        case Cc::Ne: return "NE";
        case Cc::Ult: return "ULT";
        case Cc::Uge: return "UGE";
        case Cc::Slt: return "SLT";
        case Cc::Sge: return "SGE";
    }
    return "??";
}

static std::string reg(uint8_t r) { return "r" + std::to_string(r); }

static std::string mem_operand(const Insn& insn) {
    return "[" + reg(insn.b) + ", " + std::to_string(insn.simm8()) + "]";
}

std::string disasm(const Insn& insn, uint32_t pc) {
    switch (insn.op) {
        case Op::Halt: return "HALT";
        case Op::Movi: return "MOVI " + reg(insn.a) + ", " + std::to_string(insn.imm16());
        case Op::Movhi: return "MOVHI " + reg(insn.a) + ", " + std::to_string(insn.imm16());
        case Op::Mov: return "MOV " + reg(insn.a) + ", " + reg(insn.b);
        case Op::Add: return "ADD " + reg(insn.a) + ", " + reg(insn.b) + ", " + reg(insn.c);
        case Op::Sub: return "SUB " + reg(insn.a) + ", " + reg(insn.b) + ", " + reg(insn.c);
        case Op::And: return "AND " + reg(insn.a) + ", " + reg(insn.b) + ", " + reg(insn.c);
        case Op::Or: return "OR " + reg(insn.a) + ", " + reg(insn.b) + ", " + reg(insn.c);
        case Op::Xor: return "XOR " + reg(insn.a) + ", " + reg(insn.b) + ", " + reg(insn.c);
        case Op::Shl: return "SHL " + reg(insn.a) + ", " + reg(insn.b) + ", " + std::to_string(insn.c);
        case Op::Shr: return "SHR " + reg(insn.a) + ", " + reg(insn.b) + ", " + std::to_string(insn.c);
        case Op::Addi: return "ADDI " + reg(insn.a) + ", " + reg(insn.b) + ", " + std::to_string(insn.simm8());
        case Op::Ldb: return "LDB " + reg(insn.a) + ", " + mem_operand(insn);
        case Op::Stb: return "STB " + reg(insn.a) + ", " + mem_operand(insn);
        case Op::Ldw: return "LDW " + reg(insn.a) + ", " + mem_operand(insn);
        case Op::Stw: return "STW " + reg(insn.a) + ", " + mem_operand(insn);
        case Op::Cmp: return "CMP " + reg(insn.a) + ", " + reg(insn.b);
        case Op::B:
            // Printed as the signed byte displacement from the branch itself,
            // so a self-loop reads "B AL, -4".
            return std::string("B ") + cc_name(static_cast<Cc>(insn.a)) + ", " +
                   std::to_string(insn.simm16() * 4);
        case Op::Call:
            return "CALL " + hex_prefixed(pc + 4 + static_cast<uint32_t>(insn.simm16() * 4));
        case Op::Callr: return "CALLR " + reg(insn.a);
        case Op::Ret: return "RET";
        case Op::Ecall: return "ECALL " + std::to_string(insn.a);
    }
    return "??";
}

}  // namespace mrfuzz
