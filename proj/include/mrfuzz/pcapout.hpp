#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mrfuzz {

// Per-capture GSMTAP tagging. type defaults to LTE RRC; sub_type (the
// channel code) has no sensible default and must be chosen per export.
struct GsmtapMeta {
    uint8_t type = 0x0d;
    uint8_t sub_type = 0;
    uint16_t arfcn = 0;
    uint32_t frame_number = 0;

    bool operator==(const GsmtapMeta&) const = default;
};

constexpr size_t kMaxPcapPayload = 9000;
// Ethernet(14) + IPv4(20) + UDP(8) + GSMTAP(16) around each payload.
constexpr size_t kEncapBytes = 58;

// Ones-complement checksum over a byte span (the IPv4 header algorithm).
// A header with a correct embedded checksum comes back as 0.
uint16_t inet_checksum(std::span<const uint8_t> data);

// Classic little-endian capture: 24-byte global header (v2.4, snaplen 65535,
// linktype Ethernet), then one record per input with ts_sec = record index
// and the payload wrapped in Ethernet/IPv4/UDP:4729/GSMTAP. Throws Oversize
// for payloads above kMaxPcapPayload.
std::vector<uint8_t> pcap_bytes(const std::vector<std::vector<uint8_t>>& inputs,
                                const GsmtapMeta& meta);
void pcap_export(const std::vector<std::vector<uint8_t>>& inputs, const GsmtapMeta& meta,
                 const std::filesystem::path& out);

struct PcapRecord {
    GsmtapMeta meta;
    std::vector<uint8_t> payload;

    bool operator==(const PcapRecord&) const = default;
};

// Strict reader for captures in exactly the exported shape. Any structural
// violation throws Malformed whose detail() is the byte offset of the
// offending field.
std::vector<PcapRecord> pcap_read_back(std::span<const uint8_t> file);
std::vector<PcapRecord> pcap_read_back_file(const std::filesystem::path& path);

}  // namespace mrfuzz
