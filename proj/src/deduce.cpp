#include "mrfuzz/deduce.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <numeric>

#include "mrfuzz/rng.hpp"
#include "mrfuzz/util.hpp"

namespace mrfuzz {

uint64_t measure(Campaign& c, std::span<const uint8_t> message) {
    c.run_one(message);
    return c.run_map().edge_count();
}

std::vector<std::vector<uint8_t>> noise_corpus(const NoiseParams& p) {
    if (p.n == 0 || p.len_max < p.len_min)
        throw Error(Err::Config, "noise corpus needs n >= 1 and len_min <= len_max");
    Xoshiro256ss rng(p.seed);
    std::vector<std::vector<uint8_t>> out(p.n);
    for (auto& msg : out) {
        uint32_t len = p.len_min + static_cast<uint32_t>(rng.below(p.len_max - p.len_min + 1));
        msg.resize(len);
        for (auto& b : msg) b = rng.byte();
    }
    return out;
}

NoiseStats noise_baseline(Campaign& c, const NoiseParams& p) {
    std::vector<std::vector<uint8_t>> corpus = noise_corpus(p);
    std::vector<double> counts;
    counts.reserve(corpus.size());
    for (const auto& msg : corpus) counts.push_back(static_cast<double>(measure(c, msg)));

    NoiseStats s;
    s.mean = std::accumulate(counts.begin(), counts.end(), 0.0) / counts.size();
    double var = 0.0;
    for (double x : counts) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / counts.size());
    return s;
}

DeductionReport deduce(Machine& m, std::span<const ParserCandidate> candidates,
                       const std::vector<std::vector<uint8_t>>& messages, Sanitizer* sanitizer,
                       const NoiseParams& noise, size_t map_size) {
    if (candidates.empty()) throw Error(Err::Config, "deduce needs at least one candidate");
    if (messages.empty()) throw Error(Err::Config, "deduce needs at least one message");

    DeductionReport r;
    for (const auto& msg : messages) r.message_lens.push_back(static_cast<uint32_t>(msg.size()));

    for (const ParserCandidate& cand : candidates) {
        Campaign c(m, cand.harness, sanitizer, map_size);
        std::vector<uint64_t> row;
        row.reserve(messages.size());
        for (const auto& msg : messages) row.push_back(measure(c, msg));
        r.candidates.push_back(cand.name);
        r.counts.push_back(std::move(row));
        r.noise.push_back(noise_baseline(c, noise));
    }

    for (size_t i = 0; i < r.candidates.size(); ++i) {
        std::vector<double> row;
        for (uint64_t n : r.counts[i]) row.push_back(static_cast<double>(n) / r.noise[i].mean);
        r.ratios.push_back(std::move(row));
    }

    for (size_t j = 0; j < messages.size(); ++j) {
        std::vector<size_t> order(r.candidates.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return r.ratios[a][j] > r.ratios[b][j]; });
        r.argmax.push_back(order.front());
        r.ranking.push_back(std::move(order));
    }
    return r;
}

std::string format_report(const DeductionReport& r) {
    size_t name_w = 9;
    for (const auto& n : r.candidates) name_w = std::max(name_w, n.size());

    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "%-*s %10s %8s |", static_cast<int>(name_w), "candidate",
                  "noise_mean", "noise_sd");
    out += buf;
    for (size_t j = 0; j < r.message_lens.size(); ++j) {
        std::snprintf(buf, sizeof buf, " %7s", ("msg" + std::to_string(j)).c_str());
        out += buf;
    }
    out += '\n';

    for (size_t i = 0; i < r.candidates.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%-*s %10.2f %8.2f |", static_cast<int>(name_w),
                      r.candidates[i].c_str(), r.noise[i].mean, r.noise[i].stddev);
        out += buf;
        for (size_t j = 0; j < r.message_lens.size(); ++j) {
            std::snprintf(buf, sizeof buf, " %6llu%c",
                          static_cast<unsigned long long>(r.counts[i][j]),
                          r.argmax[j] == i ? '*' : ' ');
            out += buf;
        }
        out += '\n';
    }

    for (size_t j = 0; j < r.message_lens.size(); ++j) {
        size_t best = r.argmax[j];
        std::snprintf(buf, sizeof buf, "msg%zu (len %u) -> %s (ratio %.2f)\n", j,
                      r.message_lens[j], r.candidates[best].c_str(), r.ratios[best][j]);
        out += buf;
    }
    return out;
}

std::string report_json(const DeductionReport& r) {
    nlohmann::json j;
    for (size_t i = 0; i < r.candidates.size(); ++i)
        j["candidates"].push_back({{"name", r.candidates[i]},
                                   {"noise_mean", r.noise[i].mean},
                                   {"noise_stddev", r.noise[i].stddev}});
    for (size_t m = 0; m < r.message_lens.size(); ++m)
        j["messages"].push_back({{"index", m}, {"len", r.message_lens[m]}});
    j["counts"] = r.counts;
    j["ratios"] = r.ratios;
    for (size_t m = 0; m < r.message_lens.size(); ++m)
        j["argmax"].push_back({{"message", m}, {"candidate", r.candidates[r.argmax[m]]}});
    return j.dump(2) + "\n";
}

}  // namespace mrfuzz
