#include "mrfuzz/mutator.hpp"

#include <algorithm>
#include <cstring>
#include <iterator>

#include "mrfuzz/util.hpp"

namespace mrfuzz {
namespace {

constexpr uint8_t kInteresting8[] = {0x00, 0x01, 0x7f, 0x80, 0xff};
constexpr uint16_t kInteresting16[] = {0x0000, 0x7fff, 0x8000, 0xffff};
constexpr uint32_t kMaxArith = 35;

}  // namespace

std::vector<uint8_t> Mutator::havoc(std::span<const uint8_t> input) {
    std::vector<uint8_t> buf(input.begin(), input.end());
    m_last_ops.clear();
    uint64_t stack = 1ull << (1 + m_rng.below(5));  // 2..32 edits
    for (uint64_t k = 0; k < stack; ++k) {
        int op = static_cast<int>(m_rng.below(kNumOps));
        if (apply_op(op, buf)) m_last_ops.push_back(static_cast<uint8_t>(op));
    }
    if (buf.size() > m_max_len) buf.resize(m_max_len);
    return buf;
}

std::vector<uint8_t> Mutator::splice(std::span<const uint8_t> a, std::span<const uint8_t> b) {
    if (a.size() < 2 || b.size() < 2)
        throw Error(Err::TooShort, "splice parents need at least 2 bytes each");
    size_t cut_a = 1 + m_rng.below(a.size() - 1);  // keep a non-empty head
    size_t cut_b = 1 + m_rng.below(b.size() - 1);  // and a non-empty tail
    std::vector<uint8_t> out(a.begin(), a.begin() + cut_a);
    out.insert(out.end(), b.begin() + cut_b, b.end());
    if (out.size() > m_max_len) out.resize(m_max_len);
    return out;
}

bool Mutator::apply_op(int op, std::vector<uint8_t>& buf) {
    size_t n = buf.size();
    switch (op) {
        case 0: {  // flip one bit
            if (n == 0) return false;
            buf[m_rng.below(n)] ^= static_cast<uint8_t>(1u << m_rng.below(8));
            return true;
        }
        case 1: {  // boundary byte
            if (n == 0) return false;
            buf[m_rng.below(n)] = kInteresting8[m_rng.below(std::size(kInteresting8))];
            return true;
        }
        case 2: {  // boundary 16-bit value
            if (n < 2) return false;
            store_le16(&buf[m_rng.below(n - 1)],
                       kInteresting16[m_rng.below(std::size(kInteresting16))]);
            return true;
        }
        case 3: {  // byte +/- 1..35
            if (n == 0) return false;
            size_t pos = m_rng.below(n);
            uint8_t d = static_cast<uint8_t>(1 + m_rng.below(kMaxArith));
            buf[pos] = m_rng.chance(0.5) ? static_cast<uint8_t>(buf[pos] + d)
                                         : static_cast<uint8_t>(buf[pos] - d);
            return true;
        }
        case 4: {  // 16-bit lane +/- 1..35
            if (n < 2) return false;
            uint8_t* p = &buf[m_rng.below(n - 1)];
            uint16_t d = static_cast<uint16_t>(1 + m_rng.below(kMaxArith));
            store_le16(p, m_rng.chance(0.5) ? static_cast<uint16_t>(load_le16(p) + d)
                                            : static_cast<uint16_t>(load_le16(p) - d));
            return true;
        }
        case 5: {  // 32-bit lane +/- 1..35
            if (n < 4) return false;
            uint8_t* p = &buf[m_rng.below(n - 3)];
            uint32_t d = static_cast<uint32_t>(1 + m_rng.below(kMaxArith));
            store_le32(p, m_rng.chance(0.5) ? load_le32(p) + d : load_le32(p) - d);
            return true;
        }
        case 6: {  // random byte
            if (n == 0) return false;
            buf[m_rng.below(n)] = m_rng.byte();
            return true;
        }
        case 7: {  // delete a block, keeping at least one byte
            if (n < 2) return false;
            size_t len = 1 + m_rng.below(n - 1);
            size_t pos = m_rng.below(n - len + 1);
            buf.erase(buf.begin() + pos, buf.begin() + pos + len);
            return true;
        }
        case 8: {  // insert a duplicated block, sometimes a constant run
            if (n >= m_max_len) return false;
            size_t room = m_max_len - n;
            if (n == 0 || m_rng.chance(0.25)) {
                size_t len = std::min<size_t>(1 + m_rng.below(16), room);
                buf.insert(buf.begin() + m_rng.below(n + 1), len, m_rng.byte());
            } else {
                size_t len = std::min<size_t>(1 + m_rng.below(n), room);
                size_t src = m_rng.below(n - len + 1);
                std::vector<uint8_t> blk(buf.begin() + src, buf.begin() + src + len);
                buf.insert(buf.begin() + m_rng.below(n + 1), blk.begin(), blk.end());
            }
            return true;
        }
        case 9: {  // copy a block over another spot (overlap allowed)
            if (n < 2) return false;
            size_t len = 1 + m_rng.below(n - 1);
            size_t src = m_rng.below(n - len + 1);
            size_t dst = m_rng.below(n - len + 1);
            if (src == dst) return false;
            std::memmove(&buf[dst], &buf[src], len);
            return true;
        }
        default: return false;
    }
}

}  // namespace mrfuzz
