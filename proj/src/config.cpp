#include "mrfuzz/config.hpp"

#include <algorithm>
#include <charconv>
#include <initializer_list>
#include <map>
#include <set>

#include "mrfuzz/util.hpp"

namespace mrfuzz {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

// Cut a trailing comment, ignoring '#' inside double quotes.
std::string_view strip_comment(std::string_view s) {
    bool in_str = false;
    for (size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_str) {
            if (c == '\\' && i + 1 < s.size())
                ++i;
            else if (c == '"')
                in_str = false;
        } else if (c == '"') {
            in_str = true;
        } else if (c == '#') {
            return s.substr(0, i);
        }
    }
    return s;
}

struct Parser {
    std::string name;
    std::filesystem::path base_dir;
    int line_no = 0;

    HarnessConfig cfg;

    // Staging for sections whose fields interact and can arrive in any order.
    struct InputStage {
        std::optional<std::string> mode;
        std::optional<uint32_t> max_len;
        std::optional<uint32_t> buffer_addr, len_addr;
        std::optional<uint8_t> len_reg;
        std::optional<uint32_t> ilm_addr, payload_addr, len_field_addr, local_para_addr,
            peer_buff_addr;
        std::optional<uint16_t> msg_id;
    } input;
    bool have_input = false;
    bool have_sanitizer = false;
    HarnessConfig::SanitizerSpec san;
    std::set<std::string> san_keys;

    std::string section;
    std::set<std::string> scalar_sections;  // reject a repeated [image] etc.
    std::set<std::string> table_keys;       // duplicate-key check, per table instance
    std::map<std::string, int> key_lines;   // "cpu.entry" -> source line
    std::map<std::string, int> section_lines;

    [[noreturn]] void fail(const std::string& msg) const { fail_at(line_no, msg); }
    [[noreturn]] void fail_at(int line, const std::string& msg) const {
        std::string where = name;
        if (line > 0) where += ":" + std::to_string(line);
        throw Error(Err::Config, where + ": " + msg, static_cast<uint64_t>(line));
    }

    uint64_t parse_int(std::string_view v) const {
        std::string_view digits = v;
        int base = 10;
        if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
            base = 16;
            digits = v.substr(2);
        }
        uint64_t out = 0;
        auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), out, base);
        if (v.empty() || ec != std::errc{} || p != digits.data() + digits.size())
            fail("expected integer, got '" + std::string(v) + "'");
        return out;
    }

    uint32_t parse_u32(std::string_view v) const {
        uint64_t x = parse_int(v);
        if (x > 0xffffffffull) fail("value " + std::string(v) + " does not fit in 32 bits");
        return static_cast<uint32_t>(x);
    }

    uint16_t parse_u16(std::string_view v) const {
        uint64_t x = parse_int(v);
        if (x > 0xffffull) fail("value " + std::string(v) + " does not fit in 16 bits");
        return static_cast<uint16_t>(x);
    }

    uint8_t parse_reg(std::string_view v) const {
        uint64_t x = parse_int(v);
        if (x >= kNumRegs) fail("register index " + std::string(v) + " out of range");
        return static_cast<uint8_t>(x);
    }

    std::string parse_string(std::string_view v) const {
        if (v.size() < 2 || v.front() != '"' || v.back() != '"')
            fail("expected quoted string, got '" + std::string(v) + "'");
        std::string out;
        for (size_t i = 1; i + 1 < v.size(); ++i) {
            char c = v[i];
            if (c == '"') fail("stray quote inside string");
            if (c != '\\') {
                out += c;
                continue;
            }
            if (++i + 1 >= v.size()) fail("dangling escape in string");
            switch (v[i]) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                default: fail(std::string("unknown escape '\\") + v[i] + "'");
            }
        }
        return out;
    }

    std::vector<uint32_t> parse_u32_array(std::string_view v) const {
        if (v.size() < 2 || v.front() != '[' || v.back() != ']')
            fail("expected [..] array, got '" + std::string(v) + "'");
        std::string_view body = trim(v.substr(1, v.size() - 2));
        std::vector<uint32_t> out;
        while (!body.empty()) {
            size_t comma = body.find(',');
            std::string_view item = trim(body.substr(0, comma));
            if (item.empty()) fail("empty array element");
            out.push_back(parse_u32(item));
            if (comma == std::string_view::npos) break;
            body = trim(body.substr(comma + 1));
            if (body.empty()) fail("trailing comma in array");
        }
        return out;
    }

    uint8_t parse_perms(std::string_view v) const {
        std::string s = parse_string(v);
        uint8_t p = 0;
        for (char c : s) {
            uint8_t bit = c == 'r' ? kPermR : c == 'w' ? kPermW : c == 'x' ? kPermX : 0;
            if (!bit) fail(std::string("bad permission character '") + c + "' (use r, w, x)");
            if (p & bit) fail("repeated permission character in '" + s + "'");
            p |= bit;
        }
        if (!p) fail("empty permission string");
        return p;
    }

    void enter_section(std::string_view header) {
        bool array = header.size() > 4 && header[1] == '[';
        if (array && header[header.size() - 2] != ']') fail("unterminated section header");
        std::string nm(trim(header.substr(array ? 2 : 1, header.size() - (array ? 4 : 2))));
        table_keys.clear();
        if (array) {
            if (nm == "region") {
                cfg.regions.emplace_back();
                section_lines["region[" + std::to_string(cfg.regions.size() - 1) + "]"] = line_no;
            } else if (nm == "candidate") {
                cfg.candidates.emplace_back();
            } else if (nm == "image" || nm == "cpu" || nm == "input" || nm == "sanitizer" ||
                       nm == "fuzz") {
                fail("[[" + nm + "]] is not an array section; write [" + nm + "]");
            } else {
                fail("unknown section [[" + nm + "]]");
            }
        } else {
            if (nm == "region" || nm == "candidate")
                fail("[" + nm + "] must be an array section; write [[" + nm + "]]");
            if (nm != "image" && nm != "cpu" && nm != "input" && nm != "sanitizer" && nm != "fuzz")
                fail("unknown section [" + nm + "]");
            if (!scalar_sections.insert(nm).second) fail("duplicate section [" + nm + "]");
            if (nm == "input") have_input = true;
            if (nm == "sanitizer") have_sanitizer = true;
            section_lines[nm] = line_no;
        }
        section = nm;
    }

    void note_key(const std::string& key) {
        if (!table_keys.insert(key).second)
            fail("duplicate key '" + key + "' in [" + section + "]");
        key_lines[section + "." + key] = line_no;
    }

    void handle_kv(std::string_view key_sv, std::string_view val) {
        std::string key(key_sv);
        if (section.empty()) fail("key '" + key + "' appears before any section header");
        note_key(key);

        if (section == "image") {
            if (key == "path") {
                std::filesystem::path p = parse_string(val);
                cfg.image_path = p.is_absolute() ? p : base_dir / p;
            } else if (key == "load_addr") {
                cfg.load_addr = parse_u32(val);
            } else {
                fail("unknown key '" + key + "' in [image]");
            }
        } else if (section == "region") {
            RegionSpec& r = cfg.regions.back();
            if (key == "base")
                r.base = parse_u32(val);
            else if (key == "size")
                r.size = parse_u32(val);
            else if (key == "perms")
                r.perms = parse_perms(val);
            else if (key == "file_off")
                r.file_off = parse_u32(val);
            else
                fail("unknown key '" + key + "' in [[region]]");
        } else if (section == "cpu") {
            if (key == "entry")
                cfg.entry = parse_u32(val);
            else if (key == "exits")
                cfg.exits = parse_u32_array(val);
            else if (key == "max_instructions")
                cfg.max_instructions = parse_int(val);
            else if (key.size() >= 2 && key[0] == 'r' &&
                     key.find_first_not_of("0123456789", 1) == std::string::npos) {
                uint64_t idx = parse_int(key.substr(1));
                if (idx >= kNumRegs) fail("no such register '" + key + "'");
                cfg.init_regs[idx] = parse_u32(val);
            } else {
                fail("unknown key '" + key + "' in [cpu]");
            }
        } else if (section == "input") {
            if (key == "mode")
                input.mode = parse_string(val);
            else if (key == "max_len")
                input.max_len = parse_u32(val);
            else if (key == "buffer_addr")
                input.buffer_addr = parse_u32(val);
            else if (key == "len_reg")
                input.len_reg = parse_reg(val);
            else if (key == "len_addr")
                input.len_addr = parse_u32(val);
            else if (key == "ilm_addr")
                input.ilm_addr = parse_u32(val);
            else if (key == "msg_id")
                input.msg_id = parse_u16(val);
            else if (key == "payload_addr")
                input.payload_addr = parse_u32(val);
            else if (key == "len_field_addr")
                input.len_field_addr = parse_u32(val);
            else if (key == "local_para_addr")
                input.local_para_addr = parse_u32(val);
            else if (key == "peer_buff_addr")
                input.peer_buff_addr = parse_u32(val);
            else
                fail("unknown key '" + key + "' in [input]");
        } else if (section == "sanitizer") {
            if (key == "arena_base")
                san.arena.base = parse_u32(val);
            else if (key == "arena_size")
                san.arena.size = parse_u32(val);
            else if (key == "alloc_addr")
                san.abi.alloc_addr = parse_u32(val);
            else if (key == "free_addr")
                san.abi.free_addr = parse_u32(val);
            else if (key == "size_reg")
                san.abi.size_reg = parse_reg(val);
            else if (key == "ptr_reg")
                san.abi.ptr_reg = parse_reg(val);
            else if (key == "ret_reg")
                san.abi.ret_reg = parse_reg(val);
            else
                fail("unknown key '" + key + "' in [sanitizer]");
            san_keys.insert(key);
        } else if (section == "fuzz") {
            if (key == "map_size")
                cfg.map_size = static_cast<size_t>(parse_int(val));
            else if (key == "persistent_iters")
                cfg.persistent_iters = parse_u32(val);
            else if (key == "seed")
                cfg.seed = parse_int(val);
            else
                fail("unknown key '" + key + "' in [fuzz]");
        } else if (section == "candidate") {
            CandidateSpec& c = cfg.candidates.back();
            if (key == "name")
                c.name = parse_string(val);
            else if (key == "entry")
                c.entry = parse_u32(val);
            else if (key == "msg_id")
                c.msg_id = parse_u16(val);
            else
                fail("unknown key '" + key + "' in [[candidate]]");
        }
    }

    void parse(std::string_view text) {
        size_t pos = 0;
        while (pos <= text.size()) {
            size_t nl = text.find('\n', pos);
            std::string_view raw =
                text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
            ++line_no;
            pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

            std::string_view line = trim(strip_comment(raw));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') fail("unterminated section header");
                enter_section(line);
                continue;
            }
            size_t eq = line.find('=');
            if (eq == std::string_view::npos) fail("expected 'key = value'");
            std::string_view key = trim(line.substr(0, eq));
            std::string_view val = trim(line.substr(eq + 1));
            if (key.empty()) fail("missing key before '='");
            if (val.empty()) fail("missing value for key '" + std::string(key) + "'");
            handle_kv(key, val);
        }
    }

    int line_of(const std::string& dotted) const {
        auto it = key_lines.find(dotted);
        return it == key_lines.end() ? 0 : it->second;
    }

    // Does [addr, addr+size) lie entirely inside declared regions (adjacent
    // regions count as contiguous)?
    bool contained(uint32_t addr, uint32_t size) const {
        if (size == 0) return true;
        uint64_t cur = addr;
        uint64_t end = static_cast<uint64_t>(addr) + size;
        std::vector<std::pair<uint64_t, uint64_t>> spans;
        for (const auto& r : cfg.regions)
            spans.emplace_back(r.base, static_cast<uint64_t>(r.base) + r.size);
        std::sort(spans.begin(), spans.end());
        for (const auto& [lo, hi] : spans) {
            if (hi <= cur) continue;
            if (lo > cur) return false;
            cur = hi;
            if (cur >= end) return true;
        }
        return false;
    }

    void require_inside(const std::string& dotted, const char* what, uint32_t addr,
                        uint32_t size) const {
        if (!contained(addr, size))
            fail_at(line_of(dotted), std::string(what) + " " + hex_prefixed(addr) + " (+" +
                                         std::to_string(size) +
                                         ") is outside every declared region");
    }

    void finish() {
        if (cfg.image_path.empty())
            fail_at(section_lines.count("image") ? section_lines.at("image") : 0,
                    "missing [image] path");
        if (cfg.regions.empty()) fail_at(0, "no [[region]] declared");
        for (size_t i = 0; i < cfg.regions.size(); ++i) {
            const RegionSpec& r = cfg.regions[i];
            int ln = section_lines.count("region[" + std::to_string(i) + "]")
                         ? section_lines.at("region[" + std::to_string(i) + "]")
                         : 0;
            if (r.size == 0) fail_at(ln, "region size must be nonzero");
            if (r.perms == 0) fail_at(ln, "region needs a perms string");
        }
        if (!line_of("cpu.entry")) fail_at(0, "missing [cpu] entry");
        if (!have_input) fail_at(0, "missing [input] section");
        if (!input.mode) fail_at(section_lines.at("input"), "missing [input] mode");

        auto reject = [&](const char* mode, std::initializer_list<const char*> keys) {
            for (const char* k : keys)
                if (int ln = line_of(std::string("input.") + k))
                    fail_at(ln, std::string("key '") + k + "' does not apply to mode \"" + mode +
                                    "\"");
        };
        if (*input.mode == "raw") {
            reject("raw", {"ilm_addr", "msg_id", "payload_addr", "len_field_addr",
                           "local_para_addr", "peer_buff_addr"});
            if (!input.buffer_addr)
                fail_at(section_lines.at("input"), "raw mode needs buffer_addr");
            if (!input.len_reg && !input.len_addr)
                fail_at(section_lines.at("input"), "raw mode needs len_reg or len_addr");
            RawPlacement p;
            p.buffer_addr = *input.buffer_addr;
            p.len_reg = input.len_reg;
            p.len_addr = input.len_addr;
            cfg.placement = p;
        } else if (*input.mode == "ilm") {
            reject("ilm", {"buffer_addr", "len_reg", "len_addr"});
            IlmPlacement p;
            auto need = [&](std::optional<uint32_t> v, const char* k) {
                if (!v)
                    fail_at(section_lines.at("input"), std::string("ilm mode needs ") + k);
                return *v;
            };
            p.ilm_addr = need(input.ilm_addr, "ilm_addr");
            p.payload_addr = need(input.payload_addr, "payload_addr");
            p.len_field_addr = need(input.len_field_addr, "len_field_addr");
            p.local_para_addr = need(input.local_para_addr, "local_para_addr");
            p.peer_buff_addr = input.peer_buff_addr.value_or(0);  // 0 = null pointer
            if (!input.msg_id) fail_at(section_lines.at("input"), "ilm mode needs msg_id");
            p.msg_id = *input.msg_id;
            cfg.placement = p;
        } else {
            fail_at(line_of("input.mode"),
                    "mode must be \"raw\" or \"ilm\", got \"" + *input.mode + "\"");
        }
        if (input.max_len) cfg.input_max_len = *input.max_len;
        if (cfg.input_max_len == 0) fail_at(line_of("input.max_len"), "max_len must be nonzero");
        if (*input.mode == "ilm" && cfg.input_max_len > 0xffff)
            fail_at(line_of("input.max_len"),
                    "ilm length fields are 16-bit; max_len cannot exceed 65535");

        if (have_sanitizer) {
            for (const char* k : {"arena_base", "arena_size", "alloc_addr", "free_addr"})
                if (!san_keys.count(k))
                    fail_at(section_lines.at("sanitizer"),
                            std::string("missing [sanitizer] ") + k);
            cfg.sanitizer = san;
        }

        if (cfg.map_size == 0 || (cfg.map_size & (cfg.map_size - 1)))
            fail_at(line_of("fuzz.map_size"), "map_size must be a power of two");

        std::set<std::string> names;
        for (const auto& c : cfg.candidates) {
            if (c.name.empty()) fail_at(0, "candidate without a name");
            if (!names.insert(c.name).second) fail_at(0, "duplicate candidate name " + c.name);
            if (c.msg_id && !std::holds_alternative<IlmPlacement>(cfg.placement))
                fail_at(0, "candidate " + c.name + " overrides msg_id but input mode is raw");
        }

        // Address sanity before anything runs.
        require_inside("cpu.entry", "entry", cfg.entry, kInsnSize);
        for (uint32_t e : cfg.exits) require_inside("cpu.exits", "exit", e, kInsnSize);
        for (const auto& c : cfg.candidates)
            if (c.entry) require_inside("candidate.entry", "candidate entry", *c.entry, kInsnSize);
        if (const auto* raw = std::get_if<RawPlacement>(&cfg.placement)) {
            require_inside("input.buffer_addr", "input buffer", raw->buffer_addr,
                           cfg.input_max_len);
            if (raw->len_addr) require_inside("input.len_addr", "length field", *raw->len_addr, 4);
        } else {
            const auto& ilm = std::get<IlmPlacement>(cfg.placement);
            require_inside("input.ilm_addr", "message struct", ilm.ilm_addr, 12);
            require_inside("input.local_para_addr", "local_para block", ilm.local_para_addr, 8);
            require_inside("input.len_field_addr", "queue buffer header", ilm.len_field_addr, 8);
            require_inside("input.payload_addr", "payload buffer", ilm.payload_addr,
                           cfg.input_max_len);
            if (ilm.peer_buff_addr)
                require_inside("input.peer_buff_addr", "peer buffer", ilm.peer_buff_addr, 1);
        }
        if (cfg.sanitizer) {
            require_inside("sanitizer.arena_base", "arena", cfg.sanitizer->arena.base,
                           cfg.sanitizer->arena.size);
            require_inside("sanitizer.alloc_addr", "alloc routine", cfg.sanitizer->abi.alloc_addr,
                           kInsnSize);
            require_inside("sanitizer.free_addr", "free routine", cfg.sanitizer->abi.free_addr,
                           kInsnSize);
        }
    }
};

}  // namespace

HarnessConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                           const std::string& display_name) {
    Parser p;
    p.name = display_name;
    p.base_dir = base_dir;
    p.parse(text);
    p.finish();
    return p.cfg;
}

HarnessConfig load_config(const std::filesystem::path& path) {
    std::vector<uint8_t> bytes = read_file(path);
    std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    std::filesystem::path dir = path.parent_path();
    if (dir.empty()) dir = ".";
    return parse_config(text, dir, path.filename().string());
}

HarnessConfig apply_candidate(const HarnessConfig& cfg, const CandidateSpec& cand) {
    HarnessConfig out = cfg;
    if (cand.entry) out.entry = *cand.entry;
    if (cand.msg_id) {
        auto* ilm = std::get_if<IlmPlacement>(&out.placement);
        if (!ilm)
            throw Error(Err::Config,
                        "candidate " + cand.name + " overrides msg_id but input mode is raw");
        ilm->msg_id = *cand.msg_id;
    }
    return out;
}

std::vector<uint8_t> load_image(const HarnessConfig& cfg) { return read_file(cfg.image_path); }

void apply_to_machine(const HarnessConfig& cfg, Machine& m, std::span<const uint8_t> image) {
    for (const RegionSpec& r : cfg.regions) m.map_region(r.base, r.size, r.perms);
    if (cfg.load_addr && !image.empty()) {
        uint64_t end = static_cast<uint64_t>(*cfg.load_addr) + image.size();
        bool fits = end <= 0x1'0000'0000ull;
        if (fits) {
            // Reuse the parser's containment walk via a throwaway check.
            uint64_t cur = *cfg.load_addr;
            std::vector<std::pair<uint64_t, uint64_t>> spans;
            for (const auto& r : cfg.regions)
                spans.emplace_back(r.base, static_cast<uint64_t>(r.base) + r.size);
            std::sort(spans.begin(), spans.end());
            fits = false;
            for (const auto& [lo, hi] : spans) {
                if (hi <= cur) continue;
                if (lo > cur) break;
                cur = hi;
                if (cur >= end) {
                    fits = true;
                    break;
                }
            }
        }
        if (!fits)
            throw Error(Err::Config, "image (" + std::to_string(image.size()) +
                                         " bytes) does not fit in the declared regions at "
                                         "load_addr " +
                                         hex_prefixed(*cfg.load_addr));
        m.write_mem(*cfg.load_addr, image);
    }
    for (const RegionSpec& r : cfg.regions) {
        if (!r.file_off) continue;
        if (*r.file_off >= image.size())
            throw Error(Err::Config, "region at " + hex_prefixed(r.base) + " wants file_off " +
                                         std::to_string(*r.file_off) + " but the image is only " +
                                         std::to_string(image.size()) + " bytes");
        size_t n = std::min<size_t>(r.size, image.size() - *r.file_off);
        m.write_mem(r.base, image.subspan(*r.file_off, n));
    }
    for (size_t i = 0; i < kNumRegs; ++i)
        if (cfg.init_regs[i]) m.cpu().regs[i] = *cfg.init_regs[i];
    m.cpu().pc = cfg.entry;
}

}  // namespace mrfuzz
