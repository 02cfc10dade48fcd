#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace mrfuzz {

class Machine;

// Input lands in a flat guest buffer; the byte count goes to a register or a
// 32-bit length field, whichever is configured.
struct RawPlacement {
    uint32_t buffer_addr = 0;
    std::optional<uint8_t> len_reg;
    std::optional<uint32_t> len_addr;
};

// Input is wrapped in the queue-message layout the bundled targets consume:
//   ilm_addr:        msg_id u16 @0, local_para ptr u32 @4, peer_buff ptr u32 @8
//   local_para_addr: ref_count u8 @0, len u16 @2, queue_buf ptr u32 @4
//   len_field_addr:  msg_len u16 @0, payload ptr u32 @4   (the queue buffer)
//   payload_addr:    the raw message bytes
// Every length field receives the placed (possibly truncated) input length.
struct IlmPlacement {
    uint32_t ilm_addr = 0;
    uint16_t msg_id = 0;
    uint32_t payload_addr = 0;
    uint32_t len_field_addr = 0;
    uint32_t local_para_addr = 0;
    uint32_t peer_buff_addr = 0;
};

using Placement = std::variant<RawPlacement, IlmPlacement>;

// Stage one test case into guest memory (truncating to max_len) and fill in
// the length fields / registers the placement names. Returns the placed
// length.
uint32_t place_input(Machine& m, const Placement& p, std::span<const uint8_t> input,
                     uint32_t max_len);

// Everything the executor needs to turn one input into one run.
struct HarnessSpec {
    uint32_t entry = 0;
    std::vector<uint32_t> exits;
    uint64_t max_instructions = 1'000'000;
    uint32_t input_max_len = 4096;
    Placement placement;
    // 0 = full snapshot restore before every run; N = cheap dirty-page reset
    // with one full restore every N runs.
    uint32_t persistent_iters = 0;
    bool always_validate = false;
};

}  // namespace mrfuzz
