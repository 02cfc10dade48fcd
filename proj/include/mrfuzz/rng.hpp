#pragma once

#include <cstdint>

namespace mrfuzz {

// xoshiro256** 1.0 (Blackman & Vigna), seeded through SplitMix64 exactly as
// the reference implementation prescribes. All fuzzing-side randomness flows
// through this type so a (seed, algorithm) pair fully determines a campaign.
class Xoshiro256ss {
public:
    explicit Xoshiro256ss(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& word : m_s) word = splitmix64(sm);
    }

    uint64_t next() {
        const uint64_t result = rotl(m_s[1] * 5, 7) * 9;
        const uint64_t t = m_s[1] << 17;
        m_s[2] ^= m_s[0];
        m_s[3] ^= m_s[1];
        m_s[1] ^= m_s[2];
        m_s[0] ^= m_s[3];
        m_s[2] ^= t;
        m_s[3] = rotl(m_s[3], 45);
        return result;
    }

    // Uniform in [0, bound) without modulo bias worth caring about for fuzzing
    // (bound is tiny compared to 2^64; plain modulo keeps replay simple).
    uint64_t below(uint64_t bound) { return bound == 0 ? 0 : next() % bound; }

    uint32_t u32() { return static_cast<uint32_t>(next() >> 32); }
    uint8_t byte() { return static_cast<uint8_t>(next() >> 56); }
    bool chance(double p) {
        return static_cast<double>(next() >> 11) * 0x1.0p-53 < p;
    }

    static uint64_t splitmix64(uint64_t& state) {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t m_s[4];
};

}  // namespace mrfuzz
