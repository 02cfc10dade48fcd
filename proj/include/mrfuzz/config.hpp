#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mrfuzz/harness.hpp"
#include "mrfuzz/sanitizer.hpp"
#include "mrfuzz/vm.hpp"

namespace mrfuzz {

struct RegionSpec {
    uint32_t base = 0;
    uint32_t size = 0;
    uint8_t perms = 0;
    // When set, this region's bytes come from the image file at this offset.
    std::optional<uint32_t> file_off;
};

// Parser-deduction candidate: same image, possibly different entry and/or
// routed message id.
struct CandidateSpec {
    std::string name;
    std::optional<uint32_t> entry;
    std::optional<uint16_t> msg_id;
};

// One target's harness setup, loaded from a TOML-style config file. Sections:
//   [image]      path, load_addr
//   [[region]]   base, size, perms ("rwx" subset), file_off
//   [cpu]        entry, exits = [..], max_instructions, r0..r15
//   [input]      mode = "raw"|"ilm", max_len, plus the placement addresses
//   [sanitizer]  arena_base, arena_size, alloc_addr, free_addr,
//                size_reg, ptr_reg, ret_reg
//   [fuzz]       map_size, persistent_iters, seed
//   [[candidate]] name, entry, msg_id
// Integers accept decimal or 0x-hex. Unknown keys are rejected. All addresses
// must fall inside declared regions; violations are reported with their source
// line before anything runs.
struct HarnessConfig {
    std::filesystem::path image_path;  // resolved against the config directory
    std::optional<uint32_t> load_addr;
    std::vector<RegionSpec> regions;

    uint32_t entry = 0;
    std::vector<uint32_t> exits;
    uint64_t max_instructions = 1'000'000;
    std::array<std::optional<uint32_t>, kNumRegs> init_regs;

    Placement placement;
    uint32_t input_max_len = 4096;

    struct SanitizerSpec {
        ArenaConfig arena;
        AllocAbi abi;
    };
    std::optional<SanitizerSpec> sanitizer;

    size_t map_size = 65536;
    uint32_t persistent_iters = 0;
    uint64_t seed = 1;

    std::vector<CandidateSpec> candidates;

    HarnessSpec spec() const {
        HarnessSpec s;
        s.entry = entry;
        s.exits = exits;
        s.max_instructions = max_instructions;
        s.input_max_len = input_max_len;
        s.placement = placement;
        s.persistent_iters = persistent_iters;
        return s;
    }
};

// Parse and schema-validate. Errors throw Err::Config with the 1-based line
// in Error::detail() and "<name>:<line>: ..." in the message.
HarnessConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                           const std::string& display_name);
HarnessConfig load_config(const std::filesystem::path& path);

// Candidate overlay: returns the config with entry/msg_id replaced where the
// candidate overrides them.
HarnessConfig apply_candidate(const HarnessConfig& cfg, const CandidateSpec& cand);

// Read the image file named by the config.
std::vector<uint8_t> load_image(const HarnessConfig& cfg);

// Map regions, place image bytes (load_addr and/or per-region file_off) and
// stage the configured registers + entry pc. The machine must be fresh.
void apply_to_machine(const HarnessConfig& cfg, Machine& m, std::span<const uint8_t> image);

}  // namespace mrfuzz
