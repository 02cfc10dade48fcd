#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mrfuzz/rng.hpp"

namespace mrfuzz {

// Stacked random-edit mutator. One havoc() call applies a power-of-two burst
// (2..32) of small edits drawn from the classic set: bit flips, boundary
// constants, counter nudges on 1/2/4-byte little-endian lanes, random bytes,
// and block delete / insert / copy. All randomness comes from the borrowed
// generator, so one (seed, corpus) pair replays the identical mutant stream.
class Mutator {
public:
    static constexpr int kNumOps = 10;

    Mutator(Xoshiro256ss& rng, uint32_t max_len)
        : m_rng(rng), m_max_len(max_len ? max_len : 1) {}

    // Mutated copy of the input, never longer than max_len. An empty input
    // can only grow through the constant-run insert, but it does grow.
    std::vector<uint8_t> havoc(std::span<const uint8_t> input);

    // Head of one parent glued to the tail of another. Throws TooShort unless
    // both parents have at least 2 bytes (a 1-byte parent has no interior cut
    // point).
    std::vector<uint8_t> splice(std::span<const uint8_t> a, std::span<const uint8_t> b);

    // Op ids applied by the most recent havoc() call, in order. Ops whose
    // preconditions failed (e.g. a 16-bit lane on a 1-byte buffer) are not
    // listed.
    std::span<const uint8_t> last_ops() const { return m_last_ops; }

private:
    bool apply_op(int op, std::vector<uint8_t>& buf);

    Xoshiro256ss& m_rng;
    uint32_t m_max_len;
    std::vector<uint8_t> m_last_ops;
};

}  // namespace mrfuzz
