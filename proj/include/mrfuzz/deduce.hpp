#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mrfuzz/executor.hpp"

namespace mrfuzz {

// One parser entry under test: a name plus the harness that reaches it
// (typically the shared dispatcher entry with a candidate-specific message
// id, but a distinct entry point works just as well).
struct ParserCandidate {
    std::string name;
    HarnessSpec harness;
};

struct NoiseParams {
    size_t n = 30;
    uint32_t len_min = 32;
    uint32_t len_max = 42;
    uint64_t seed = 1;
};

struct NoiseStats {
    double mean = 0.0;
    double stddev = 0.0;  // population stddev; n=1 gives 0
};

// Edge count of one run of the message. Faulting runs are not errors here:
// their partial coverage is the signal that separates wrong parsers.
uint64_t measure(Campaign& c, std::span<const uint8_t> message);

// The shared noise corpus: n byte strings with lengths uniform in
// [len_min, len_max], fully determined by the seed.
std::vector<std::vector<uint8_t>> noise_corpus(const NoiseParams& p);

// Mean/stddev of edge counts over the noise corpus for this campaign.
NoiseStats noise_baseline(Campaign& c, const NoiseParams& p = {});

// counts/ratios are indexed [candidate][message]; ranking/argmax per message.
// The ranking statistic is edge_count / noise_mean, which normalizes parsers
// of different sizes; raw counts stay available alongside.
struct DeductionReport {
    std::vector<std::string> candidates;
    std::vector<uint32_t> message_lens;
    std::vector<NoiseStats> noise;               // per candidate
    std::vector<std::vector<uint64_t>> counts;   // [candidate][message]
    std::vector<std::vector<double>> ratios;     // [candidate][message]
    std::vector<std::vector<size_t>> ranking;    // [message] -> candidates, best first
    std::vector<size_t> argmax;                  // [message] -> ranking.front()
};

// Measure every message through every candidate (campaigns built one at a
// time on the staged machine), plus one noise baseline per candidate with
// the same noise corpus for all. Needs >= 1 candidate and >= 1 message.
DeductionReport deduce(Machine& m, std::span<const ParserCandidate> candidates,
                       const std::vector<std::vector<uint8_t>>& messages,
                       Sanitizer* sanitizer = nullptr, const NoiseParams& noise = {},
                       size_t map_size = kDefaultMapSize);

// Fixed-width text table: per-candidate noise stats and raw counts, ratio
// argmax starred, then one "msg -> candidate" line per message.
std::string format_report(const DeductionReport& r);

// The same report as a JSON document (the deduction.json payload).
std::string report_json(const DeductionReport& r);

}  // namespace mrfuzz
