#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mrfuzz/util.hpp"

namespace mrfuzz {

// Output of the two-pass assembler: a flat binary starting at `origin` plus
// the resolved label addresses.
struct AsmResult {
    std::vector<uint8_t> binary;
    uint32_t origin = 0;
    std::map<std::string, uint32_t> symbols;

    uint32_t sym(const std::string& name) const {
        auto it = symbols.find(name);
        if (it == symbols.end()) throw Error(Err::UndefinedLabel, "unknown symbol " + name);
        return it->second;
    }
};

// Two-pass assembly of MiniRISC source. Supported syntax:
//   label:            ; define a label at the current location
//   .org ADDR         ; set the location counter (forward only)
//   .byte v, v, ...   ; emit bytes
//   .word v, ...      ; emit 32-bit little-endian words (labels allowed)
//   .ascii "text"     ; emit string bytes (no terminator)
//   .align N          ; zero-pad to the next multiple of N
//   MOVI rd, imm      ; instructions per the ISA table; B/CALL take a label
//                     ; or a byte offset relative to pc+4 (multiple of 4)
//   LA rd, label      ; pseudo: MOVI low half + MOVHI high half
// Comments start with ';'. Register aliases: sp = r13, lr = r14.
// Errors carry the 1-based source line in Error::detail().
AsmResult assemble(std::string_view source);

// Symbol table rendering: one line per symbol, "<hex addr> <name>", sorted by
// address.
std::string symbol_table_text(const AsmResult& r);

}  // namespace mrfuzz
