#include "mrfuzz/asm.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <sstream>

#include "mrfuzz/isa.hpp"

namespace mrfuzz {

namespace {

[[noreturn]] void fail(Err code, size_t line, const std::string& msg) {
    throw Error(code, "line " + std::to_string(line) + ": " + msg, line);
}

bool ident_char(char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.'; }

std::string upper(std::string s) {
    for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
}

// One source line reduced to label definitions plus a statement.
struct Line {
    size_t number = 0;
    std::vector<std::string> labels;
    std::string mnemonic;               // uppercased; empty if label-only
    std::vector<std::string> operands;  // raw operand text, trimmed
};

std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return "";
    size_t e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

// Split operands on commas that are outside quotes and brackets, so
// "[r2, 4]" stays one operand and .ascii "a,b" stays intact.
std::vector<std::string> split_operands(std::string_view s, size_t line) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    bool in_str = false, in_chr = false, esc = false;
    for (char ch : s) {
        if (esc) { cur += ch; esc = false; continue; }
        if ((in_str || in_chr) && ch == '\\') { cur += ch; esc = true; continue; }
        if (in_str) { cur += ch; if (ch == '"') in_str = false; continue; }
        if (in_chr) { cur += ch; if (ch == '\'') in_chr = false; continue; }
        switch (ch) {
            case '"': in_str = true; cur += ch; break;
            case '\'': in_chr = true; cur += ch; break;
            case '[': ++depth; cur += ch; break;
            case ']': --depth; cur += ch; break;
            case ',':
                if (depth == 0) { out.push_back(trim(cur)); cur.clear(); }
                else cur += ch;
                break;
            default: cur += ch; break;
        }
    }
    if (in_str || in_chr) fail(Err::BadMnemonic, line, "unterminated literal");
    if (depth != 0) fail(Err::BadMnemonic, line, "unbalanced brackets");
    std::string last = trim(cur);
    if (!last.empty()) out.push_back(last);
    return out;
}

// Strip a trailing comment, respecting string and char literals.
std::string strip_comment(std::string_view s) {
    std::string out;
    bool in_str = false, in_chr = false, esc = false;
    for (char ch : s) {
        if (esc) { out += ch; esc = false; continue; }
        if ((in_str || in_chr) && ch == '\\') { out += ch; esc = true; continue; }
        if (ch == '"' && !in_chr) in_str = !in_str;
        if (ch == '\'' && !in_str) in_chr = !in_chr;
        if (ch == ';' && !in_str && !in_chr) break;
        out += ch;
    }
    return out;
}

std::optional<Line> parse_line(std::string_view raw, size_t number) {
    std::string text = trim(strip_comment(raw));
    Line ln;
    ln.number = number;
    // leading "ident:" label definitions, possibly several
    for (;;) {
        size_t i = 0;
        while (i < text.size() && ident_char(text[i])) ++i;
        if (i == 0 || i >= text.size() || text[i] != ':') break;
        ln.labels.push_back(text.substr(0, i));
        text = trim(std::string_view(text).substr(i + 1));
    }
    if (!text.empty()) {
        size_t sp = text.find_first_of(" \t");
        ln.mnemonic = upper(text.substr(0, sp));
        if (sp != std::string::npos)
            ln.operands = split_operands(std::string_view(text).substr(sp + 1), number);
    }
    if (ln.labels.empty() && ln.mnemonic.empty()) return std::nullopt;
    return ln;
}

char parse_escape(char ch, size_t line) {
    switch (ch) {
        case 'n': return '\n';
        case 't': return '\t';
        case 'r': return '\r';
        case '0': return '\0';
        case '\\': return '\\';
        case '\'': return '\'';
        case '"': return '"';
    }
    fail(Err::BadMnemonic, line, std::string("unknown escape \\") + ch);
}

std::string parse_string(const std::string& tok, size_t line) {
    if (tok.size() < 2 || tok.front() != '"' || tok.back() != '"')
        fail(Err::BadMnemonic, line, "expected a quoted string");
    std::string out;
    for (size_t i = 1; i + 1 < tok.size(); ++i) {
        if (tok[i] == '\\') {
            if (i + 2 >= tok.size()) fail(Err::BadMnemonic, line, "dangling escape");
            out += parse_escape(tok[++i], line);
        } else {
            out += tok[i];
        }
    }
    return out;
}

struct Operand {
    enum Kind { Reg, Number, Label, Mem } kind;
    int reg = -1;        // Reg / Mem base
    int64_t value = 0;   // Number / Mem displacement
    std::string label;   // Label
};

std::optional<int> parse_reg(const std::string& tok) {
    std::string u = upper(tok);
    if (u == "SP") return kRegSp;
    if (u == "LR") return kRegLr;
    if (u.size() >= 2 && u[0] == 'R') {
        int v = 0;
        auto [p, ec] = std::from_chars(u.data() + 1, u.data() + u.size(), v);
        if (ec == std::errc() && p == u.data() + u.size() && v >= 0 && v < kNumRegs) return v;
    }
    return std::nullopt;
}

std::optional<int64_t> parse_number(const std::string& tok, size_t line) {
    if (tok.empty()) return std::nullopt;
    if (tok.front() == '\'') {
        if (tok.size() == 3 && tok.back() == '\'') return tok[1];
        if (tok.size() == 4 && tok[1] == '\\' && tok.back() == '\'')
            return parse_escape(tok[2], line);
        fail(Err::BadMnemonic, line, "bad character literal " + tok);
    }
    bool neg = false;
    std::string_view sv = tok;
    if (sv.front() == '-') { neg = true; sv.remove_prefix(1); }
    else if (sv.front() == '+') sv.remove_prefix(1);
    int base = 10;
    if (sv.size() > 2 && sv[0] == '0' && (sv[1] == 'x' || sv[1] == 'X')) {
        base = 16;
        sv.remove_prefix(2);
    }
    int64_t v = 0;
    auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v, base);
    if (ec != std::errc() || p != sv.data() + sv.size()) return std::nullopt;
    return neg ? -v : v;
}

Operand parse_operand(const std::string& tok, size_t line) {
    Operand op;
    if (auto r = parse_reg(tok)) {
        op.kind = Operand::Reg;
        op.reg = *r;
        return op;
    }
    if (tok.front() == '[') {
        if (tok.back() != ']') fail(Err::BadMnemonic, line, "bad memory operand " + tok);
        auto inner = split_operands(std::string_view(tok).substr(1, tok.size() - 2), line);
        if (inner.empty() || inner.size() > 2)
            fail(Err::BadMnemonic, line, "bad memory operand " + tok);
        auto base = parse_reg(inner[0]);
        if (!base) fail(Err::BadMnemonic, line, "bad base register in " + tok);
        op.kind = Operand::Mem;
        op.reg = *base;
        if (inner.size() == 2) {
            auto d = parse_number(inner[1], line);
            if (!d) fail(Err::BadMnemonic, line, "bad displacement in " + tok);
            op.value = *d;
        }
        return op;
    }
    if (auto n = parse_number(tok, line)) {
        op.kind = Operand::Number;
        op.value = *n;
        return op;
    }
    if (!tok.empty() && ident_char(tok[0]) && !std::isdigit(static_cast<unsigned char>(tok[0]))) {
        op.kind = Operand::Label;
        op.label = tok;
        return op;
    }
    fail(Err::BadMnemonic, line, "cannot parse operand " + tok);
}

struct Assembler {
    std::map<std::string, uint32_t> symbols;
    std::vector<uint8_t> out;
    uint32_t origin = 0;
    bool origin_set = false;
    uint32_t loc = 0;
    bool emitted = false;

    // Statement size in bytes; must not depend on label values so that pass 1
    // can lay out addresses.
    uint32_t size_of(const Line& ln) const {
        const std::string& m = ln.mnemonic;
        if (m.empty()) return 0;  // label-only line
        if (m == ".ORG" || m == ".ALIGN") return 0;  // handled specially
        if (m == ".BYTE") return static_cast<uint32_t>(ln.operands.size());
        if (m == ".WORD") return static_cast<uint32_t>(4 * ln.operands.size());
        if (m == ".ASCII") {
            if (ln.operands.size() != 1) fail(Err::BadMnemonic, ln.number, ".ascii takes one string");
            return static_cast<uint32_t>(parse_string(ln.operands[0], ln.number).size());
        }
        if (m == "LA") return 8;  // MOVI + MOVHI
        return 4;
    }

    void advance(const Line& ln) {
        const std::string& m = ln.mnemonic;
        if (m == ".ORG") {
            if (ln.operands.size() != 1) fail(Err::BadMnemonic, ln.number, ".org takes one value");
            auto v = parse_number(ln.operands[0], ln.number);
            if (!v || *v < 0 || *v > 0xffffffffLL)
                fail(Err::RangeError, ln.number, "bad .org value");
            uint32_t target = static_cast<uint32_t>(*v);
            if (!emitted && !origin_set) {
                origin = target;
                origin_set = true;
            } else if (target < loc) {
                fail(Err::RangeError, ln.number, ".org may not move backward");
            }
            loc = target;
            return;
        }
        if (m == ".ALIGN") {
            if (ln.operands.size() != 1) fail(Err::BadMnemonic, ln.number, ".align takes one value");
            auto v = parse_number(ln.operands[0], ln.number);
            if (!v || *v <= 0 || (*v & (*v - 1)))
                fail(Err::RangeError, ln.number, ".align needs a power of two");
            uint32_t a = static_cast<uint32_t>(*v);
            loc = (loc + a - 1) & ~(a - 1);
            return;
        }
        loc += size_of(ln);
        if (!m.empty() && m[0] != '.') emitted = true;  // instructions pin the origin
        if (size_of(ln) > 0) emitted = true;
    }

    void define_labels(const Line& ln) {
        for (const std::string& name : ln.labels) {
            if (symbols.count(name))
                fail(Err::BadMnemonic, ln.number, "duplicate label " + name);
            symbols[name] = loc;
        }
    }

    int64_t resolve(const Operand& op, size_t line) const {
        if (op.kind == Operand::Number) return op.value;
        if (op.kind == Operand::Label) {
            auto it = symbols.find(op.label);
            if (it == symbols.end())
                fail(Err::UndefinedLabel, line, "undefined label " + op.label);
            return it->second;
        }
        fail(Err::BadMnemonic, line, "expected a value operand");
    }

    void emit_byte(uint8_t b) {
        // pad any .org gap with zeros
        uint32_t off = loc - origin;
        if (out.size() < off) out.resize(off, 0);
        out.push_back(b);
        ++loc;
    }

    void emit_word(uint32_t w) {
        uint8_t b[4];
        store_le32(b, w);
        for (uint8_t x : b) emit_byte(x);
    }

    uint8_t want_reg(const Operand& op, size_t line) const {
        if (op.kind != Operand::Reg) fail(Err::BadMnemonic, line, "expected a register");
        return static_cast<uint8_t>(op.reg);
    }

    uint16_t want_imm16(int64_t v, size_t line) const {
        if (v < -32768 || v > 0xffff)
            fail(Err::RangeError, line, "immediate " + std::to_string(v) + " does not fit 16 bits");
        return static_cast<uint16_t>(v);
    }

    uint8_t want_simm8(int64_t v, size_t line) const {
        if (v < -128 || v > 127)
            fail(Err::RangeError, line, "displacement " + std::to_string(v) + " does not fit 8 bits");
        return static_cast<uint8_t>(static_cast<int8_t>(v));
    }

    uint8_t want_imm5(int64_t v, size_t line) const {
        if (v < 0 || v > 31)
            fail(Err::RangeError, line, "shift amount " + std::to_string(v) + " out of 0..31");
        return static_cast<uint8_t>(v);
    }

    // Branch/call displacement: labels are absolute targets, numbers are byte
    // offsets relative to pc+4. Both must land on a 4-byte boundary.
    uint16_t branch_disp(const Operand& op, size_t line) const {
        int64_t delta;
        if (op.kind == Operand::Label) {
            delta = static_cast<int64_t>(resolve(op, line)) - (static_cast<int64_t>(loc) + 4);
        } else if (op.kind == Operand::Number) {
            delta = op.value;
        } else {
            fail(Err::BadMnemonic, line, "expected a branch target");
        }
        if (delta % 4 != 0)
            fail(Err::RangeError, line, "branch target not 4-byte aligned");
        int64_t words = delta / 4;
        if (words < -32768 || words > 32767)
            fail(Err::RangeError, line, "branch target out of range");
        return static_cast<uint16_t>(static_cast<int16_t>(words));
    }

    void encode_line(const Line& ln) {
        const std::string& m = ln.mnemonic;
        size_t n = ln.number;
        if (m.empty()) return;

        if (m == ".ORG" || m == ".ALIGN") {
            advance(ln);
            uint32_t off = loc - origin;
            if (out.size() < off) out.resize(off, 0);
            return;
        }
        if (m == ".ASCII") {  // string operand, not parseable as a value
            if (ln.operands.size() != 1) fail(Err::BadMnemonic, n, ".ascii takes one string");
            for (char ch : parse_string(ln.operands[0], n)) emit_byte(static_cast<uint8_t>(ch));
            return;
        }

        std::vector<Operand> ops;
        for (const std::string& tok : ln.operands) ops.push_back(parse_operand(tok, n));
        auto need = [&](size_t k, const char* what) {
            if (ops.size() != k)
                fail(Err::BadMnemonic, n, std::string(what) + " takes " + std::to_string(k) +
                                              " operand(s)");
        };

        if (m == ".BYTE") {
            for (const Operand& o : ops) {
                if (o.kind != Operand::Number)
                    fail(Err::BadMnemonic, n, ".byte takes numeric values");
                if (o.value < -128 || o.value > 255)
                    fail(Err::RangeError, n, ".byte value out of range");
                emit_byte(static_cast<uint8_t>(o.value));
            }
            return;
        }
        if (m == ".WORD") {
            for (const Operand& o : ops) {
                int64_t v = resolve(o, n);
                if (v < INT32_MIN || v > static_cast<int64_t>(UINT32_MAX))
                    fail(Err::RangeError, n, ".word value out of range");
                emit_word(static_cast<uint32_t>(v));
            }
            return;
        }
        if (m == "HALT") { need(0, "HALT"); emit_word(encode(Op::Halt)); return; }
        if (m == "RET") { need(0, "RET"); emit_word(encode(Op::Ret)); return; }
        if (m == "MOVI" || m == "MOVHI") {
            need(2, m.c_str());
            uint8_t rd = want_reg(ops[0], n);
            uint16_t imm = want_imm16(resolve(ops[1], n), n);
            emit_word(encode_imm16(m == "MOVI" ? Op::Movi : Op::Movhi, rd, imm));
            return;
        }
        if (m == "LA") {
            need(2, "LA");
            uint8_t rd = want_reg(ops[0], n);
            int64_t v = resolve(ops[1], n);
            if (v < 0 || v > static_cast<int64_t>(UINT32_MAX))
                fail(Err::RangeError, n, "LA value out of range");
            uint32_t addr = static_cast<uint32_t>(v);
            emit_word(encode_imm16(Op::Movi, rd, static_cast<uint16_t>(addr & 0xffff)));
            emit_word(encode_imm16(Op::Movhi, rd, static_cast<uint16_t>(addr >> 16)));
            return;
        }
        if (m == "MOV") {
            need(2, "MOV");
            emit_word(encode(Op::Mov, want_reg(ops[0], n), want_reg(ops[1], n)));
            return;
        }
        if (m == "ADD" || m == "SUB" || m == "AND" || m == "OR" || m == "XOR") {
            need(3, m.c_str());
            Op op = m == "ADD" ? Op::Add
                  : m == "SUB" ? Op::Sub
                  : m == "AND" ? Op::And
                  : m == "OR"  ? Op::Or
                               : Op::Xor;
            emit_word(encode(op, want_reg(ops[0], n), want_reg(ops[1], n), want_reg(ops[2], n)));
            return;
        }
        if (m == "SHL" || m == "SHR") {
            need(3, m.c_str());
            emit_word(encode(m == "SHL" ? Op::Shl : Op::Shr, want_reg(ops[0], n),
                             want_reg(ops[1], n), want_imm5(resolve(ops[2], n), n)));
            return;
        }
        if (m == "ADDI") {
            need(3, "ADDI");
            emit_word(encode(Op::Addi, want_reg(ops[0], n), want_reg(ops[1], n),
                             want_simm8(resolve(ops[2], n), n)));
            return;
        }
        if (m == "LDB" || m == "LDW" || m == "STB" || m == "STW") {
            need(2, m.c_str());
            uint8_t r = want_reg(ops[0], n);
            if (ops[1].kind != Operand::Mem)
                fail(Err::BadMnemonic, n, m + " needs a [base, disp] operand");
            Op op = m == "LDB" ? Op::Ldb : m == "LDW" ? Op::Ldw : m == "STB" ? Op::Stb : Op::Stw;
            emit_word(encode(op, r, static_cast<uint8_t>(ops[1].reg),
                             want_simm8(ops[1].value, n)));
            return;
        }
        if (m == "CMP") {
            need(2, "CMP");
            emit_word(encode(Op::Cmp, want_reg(ops[0], n), want_reg(ops[1], n)));
            return;
        }
        if (m == "B") {
            need(2, "B");
            if (ops[0].kind != Operand::Label)
                fail(Err::BadMnemonic, n, "B needs a condition code");
            std::string cc = upper(ops[0].label);
            uint8_t code;
            if (cc == "AL") code = 0;
            else if (cc == "EQ") code = 1;
            else if (cc == "NE") code = 2;
            else if (cc == "ULT") code = 3;
            else if (cc == "UGE") code = 4;
            else if (cc == "SLT") code = 5;
            else if (cc == "SGE") code = 6;
            else fail(Err::BadMnemonic, n, "unknown condition code " + ops[0].label);
            emit_word(encode_imm16(Op::B, code, branch_disp(ops[1], n)));
            return;
        }
        if (m == "CALL") {
            need(1, "CALL");
            emit_word(encode_imm16(Op::Call, 0, branch_disp(ops[0], n)));
            return;
        }
        if (m == "CALLR") {
            need(1, "CALLR");
            emit_word(encode(Op::Callr, want_reg(ops[0], n)));
            return;
        }
        if (m == "ECALL") {
            need(1, "ECALL");
            int64_t v = resolve(ops[0], n);
            if (v < 0 || v > 1) fail(Err::RangeError, n, "ECALL number must be 0 or 1");
            emit_word(encode(Op::Ecall, static_cast<uint8_t>(v)));
            return;
        }
        fail(Err::BadMnemonic, n, "unknown mnemonic " + m);
    }
};

}  // namespace

AsmResult assemble(std::string_view source) {
    std::vector<Line> lines;
    size_t number = 0;
    size_t start = 0;
    while (start <= source.size()) {
        size_t end = source.find('\n', start);
        std::string_view raw =
            source.substr(start, end == std::string_view::npos ? std::string_view::npos
                                                               : end - start);
        ++number;
        if (auto ln = parse_line(raw, number)) lines.push_back(std::move(*ln));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }

    // pass 1: lay out addresses and collect labels
    Assembler a;
    for (const Line& ln : lines) {
        // .org before any emission pins the origin; handle ordering first
        if (ln.mnemonic == ".ORG") {
            a.advance(ln);
            a.define_labels(ln);
            continue;
        }
        a.define_labels(ln);
        a.advance(ln);
    }
    if (!a.origin_set) a.origin = 0;

    // pass 2: emit with all labels known
    Assembler b;
    b.symbols = a.symbols;
    b.origin = a.origin;
    b.origin_set = true;
    b.loc = a.origin;
    for (const Line& ln : lines) b.encode_line(ln);

    AsmResult r;
    r.binary = std::move(b.out);
    r.origin = b.origin;
    r.symbols = std::move(b.symbols);
    return r;
}

std::string symbol_table_text(const AsmResult& r) {
    std::vector<std::pair<uint32_t, std::string>> rows;
    for (const auto& [name, addr] : r.symbols) rows.emplace_back(addr, name);
    std::sort(rows.begin(), rows.end());
    std::ostringstream os;
    for (const auto& [addr, name] : rows) os << hex32(addr) << " " << name << "\n";
    return os.str();
}

}  // namespace mrfuzz
