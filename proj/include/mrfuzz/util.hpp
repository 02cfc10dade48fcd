#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrfuzz {

// Every recoverable API-misuse or I/O failure in the library throws Error with
// one of these codes. Guest-side faults never throw; they surface as StopReason.
enum class Err {
    Misaligned,
    Overlap,
    Unmapped,
    UnknownHook,
    RegionSetChanged,
    ArenaUnmapped,
    AbiInvalid,
    AlreadyInstalled,
    SizeMismatch,
    TooShort,
    EmptyCorpus,
    NotCrashing,
    Oversize,
    Malformed,
    UndefinedLabel,
    BadMnemonic,
    RangeError,
    Config,
    Io,
};

class Error : public std::runtime_error {
public:
    Error(Err code, std::string msg, uint64_t detail = 0)
        : std::runtime_error(std::move(msg)), m_code(code), m_detail(detail) {}

    Err code() const { return m_code; }
    // Context-dependent: byte offset for Malformed, line number for Config.
    uint64_t detail() const { return m_detail; }

private:
    Err m_code;
    uint64_t m_detail;
};

inline uint16_t load_le16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline uint32_t load_le32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline void store_le16(uint8_t* p, uint16_t v) {
    p[0] = static_cast<uint8_t>(v);
    p[1] = static_cast<uint8_t>(v >> 8);
}

inline void store_le32(uint8_t* p, uint32_t v) {
    p[0] = static_cast<uint8_t>(v);
    p[1] = static_cast<uint8_t>(v >> 8);
    p[2] = static_cast<uint8_t>(v >> 16);
    p[3] = static_cast<uint8_t>(v >> 24);
}

// FNV-1a, 64-bit. Used for content digests (queue entries, map digests,
// snapshot hashes). Not cryptographic; collisions are acceptable for dedup.
constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr uint64_t kFnvPrime = 0x100000001b3ull;

inline uint64_t fnv1a64(std::span<const uint8_t> data, uint64_t h = kFnvOffset) {
    for (uint8_t b : data) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a64_u32(uint32_t v, uint64_t h) {
    uint8_t buf[4];
    store_le32(buf, v);
    return fnv1a64(std::span<const uint8_t>(buf, 4), h);
}

std::string hex32(uint32_t v);      // "0000abcd" (8 lowercase digits)
std::string hex64(uint64_t v);      // 16 lowercase digits
std::string hex_prefixed(uint64_t v);  // "0xabcd" (minimal digits)

std::vector<uint8_t> read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::span<const uint8_t> data);
// Write to a temp file in the same directory, then rename over the target.
void write_file_atomic(const std::filesystem::path& p, std::span<const uint8_t> data);

}  // namespace mrfuzz
