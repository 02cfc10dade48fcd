#include "mrfuzz/util.hpp"

#include <cstdio>
#include <fstream>
#include <random>

namespace mrfuzz {

static const char* kHexDigits = "0123456789abcdef";

std::string hex32(uint32_t v) {
    std::string s(8, '0');
    for (int i = 7; i >= 0; --i) {
        s[static_cast<size_t>(i)] = kHexDigits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::string hex64(uint64_t v) {
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = kHexDigits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::string hex_prefixed(uint64_t v) {
    if (v == 0) return "0x0";
    char buf[19];
    int i = 18;
    buf[i] = '\0';
    while (v != 0) {
        buf[--i] = kHexDigits[v & 0xf];
        v >>= 4;
    }
    return std::string("0x") + &buf[i];
}

std::vector<uint8_t> read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw Error(Err::Io, "cannot open for reading: " + p.string());
    f.seekg(0, std::ios::end);
    auto n = f.tellg();
    if (n < 0) throw Error(Err::Io, "cannot stat: " + p.string());
    f.seekg(0, std::ios::beg);
    std::vector<uint8_t> buf(static_cast<size_t>(n));
    if (n > 0 && !f.read(reinterpret_cast<char*>(buf.data()), n))
        throw Error(Err::Io, "short read: " + p.string());
    return buf;
}

void write_file(const std::filesystem::path& p, std::span<const uint8_t> data) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(Err::Io, "cannot open for writing: " + p.string());
    if (!data.empty() &&
        !f.write(reinterpret_cast<const char*>(data.data()),
                 static_cast<std::streamsize>(data.size())))
        throw Error(Err::Io, "short write: " + p.string());
}

void write_file_atomic(const std::filesystem::path& p, std::span<const uint8_t> data) {
    // Unique-ish temp name: pid + a random suffix keeps concurrent workers from
    // colliding inside a shared corpus directory.
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::filesystem::path tmp = p;
    tmp += ".tmp" + std::to_string(rng() & 0xffffff);
    write_file(tmp, data);
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(Err::Io, "rename failed for: " + p.string());
    }
}

}  // namespace mrfuzz
