#include "mrfuzz/pcapout.hpp"

#include "mrfuzz/util.hpp"

namespace mrfuzz {

namespace {

void put_le16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(x & 0xff);
    v.push_back(x >> 8);
}

void put_le32(std::vector<uint8_t>& v, uint32_t x) {
    put_le16(v, x & 0xffff);
    put_le16(v, x >> 16);
}

void put_be16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(x >> 8);
    v.push_back(x & 0xff);
}

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
    put_be16(v, x >> 16);
    put_be16(v, x & 0xffff);
}

uint16_t get_le16(std::span<const uint8_t> f, size_t off) {
    return static_cast<uint16_t>(f[off] | f[off + 1] << 8);
}

uint32_t get_le32(std::span<const uint8_t> f, size_t off) {
    return get_le16(f, off) | static_cast<uint32_t>(get_le16(f, off + 2)) << 16;
}

uint16_t get_be16(std::span<const uint8_t> f, size_t off) {
    return static_cast<uint16_t>(f[off] << 8 | f[off + 1]);
}

uint32_t get_be32(std::span<const uint8_t> f, size_t off) {
    return static_cast<uint32_t>(get_be16(f, off)) << 16 | get_be16(f, off + 2);
}

[[noreturn]] void malformed(std::string msg, size_t offset) {
    throw Error(Err::Malformed, std::move(msg), offset);
}

}  // namespace

uint16_t inet_checksum(std::span<const uint8_t> data) {
    uint32_t sum = 0;
    for (size_t i = 0; i + 1 < data.size(); i += 2) sum += data[i] << 8 | data[i + 1];
    if (data.size() % 2) sum += data.back() << 8;
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<uint16_t>(~sum);
}

std::vector<uint8_t> pcap_bytes(const std::vector<std::vector<uint8_t>>& inputs,
                                const GsmtapMeta& meta) {
    for (const auto& in : inputs)
        if (in.size() > kMaxPcapPayload)
            throw Error(Err::Oversize, "payload exceeds capture limit", in.size());

    std::vector<uint8_t> f;
    f.reserve(24 + inputs.size() * (16 + kEncapBytes) + 256);

    put_le32(f, 0xa1b2c3d4);  // magic, written little-endian
    put_le16(f, 2);           // version 2.4
    put_le16(f, 4);
    put_le32(f, 0);       // thiszone
    put_le32(f, 0);       // sigfigs
    put_le32(f, 65535);   // snaplen
    put_le32(f, 1);       // linktype: Ethernet

    for (size_t idx = 0; idx < inputs.size(); ++idx) {
        const auto& payload = inputs[idx];
        uint32_t wire_len = static_cast<uint32_t>(kEncapBytes + payload.size());

        put_le32(f, static_cast<uint32_t>(idx));  // ts_sec: deterministic stand-in
        put_le32(f, 0);                           // ts_usec
        put_le32(f, wire_len);                    // incl_len
        put_le32(f, wire_len);                    // orig_len

        // Ethernet: zero MACs, IPv4 ethertype.
        f.insert(f.end(), 12, 0);
        put_be16(f, 0x0800);

        // IPv4, checksum patched in below.
        size_t ip_off = f.size();
        f.push_back(0x45);
        f.push_back(0x00);
        put_be16(f, static_cast<uint16_t>(20 + 8 + 16 + payload.size()));
        put_be16(f, 0);     // identification
        put_be16(f, 0);     // flags/fragment
        f.push_back(64);    // TTL
        f.push_back(17);    // UDP
        put_be16(f, 0);     // checksum placeholder
        put_be32(f, 0x7f000001);
        put_be32(f, 0x7f000001);
        uint16_t cks = inet_checksum({f.data() + ip_off, 20});
        f[ip_off + 10] = cks >> 8;
        f[ip_off + 11] = cks & 0xff;

        // UDP on the GSMTAP port; zero checksum is legal over IPv4 and keeps
        // the file independent of payload-summing quirks.
        put_be16(f, 4729);
        put_be16(f, 4729);
        put_be16(f, static_cast<uint16_t>(8 + 16 + payload.size()));
        put_be16(f, 0);

        // GSMTAP v2, header length 4 words.
        f.push_back(2);
        f.push_back(4);
        f.push_back(meta.type);
        f.push_back(0);  // timeslot
        put_be16(f, meta.arfcn);
        f.push_back(0);  // signal dbm
        f.push_back(0);  // snr
        put_be32(f, meta.frame_number);
        f.push_back(meta.sub_type);
        f.push_back(0);  // antenna
        f.push_back(0);  // sub-slot
        f.push_back(0);  // reserved

        f.insert(f.end(), payload.begin(), payload.end());
    }
    return f;
}

void pcap_export(const std::vector<std::vector<uint8_t>>& inputs, const GsmtapMeta& meta,
                 const std::filesystem::path& out) {
    std::vector<uint8_t> bytes = pcap_bytes(inputs, meta);
    write_file(out, bytes);
}

std::vector<PcapRecord> pcap_read_back(std::span<const uint8_t> f) {
    if (f.size() < 24) malformed("capture truncated in global header", 0);
    if (get_le32(f, 0) != 0xa1b2c3d4) malformed("bad capture magic", 0);
    if (get_le16(f, 4) != 2 || get_le16(f, 6) != 4) malformed("unsupported capture version", 4);
    if (get_le32(f, 20) != 1) malformed("unsupported linktype", 20);

    std::vector<PcapRecord> out;
    size_t off = 24;
    while (off < f.size()) {
        if (f.size() - off < 16) malformed("truncated record header", off);
        uint32_t incl = get_le32(f, off + 8);
        uint32_t orig = get_le32(f, off + 12);
        if (incl != orig) malformed("record length fields disagree", off + 8);
        if (incl < kEncapBytes) malformed("record too short for encapsulation", off + 8);
        if (f.size() - off - 16 < incl) malformed("truncated record body", off + 16);

        size_t eth = off + 16;
        if (get_be16(f, eth + 12) != 0x0800) malformed("not an IPv4 frame", eth + 12);

        size_t ip = eth + 14;
        if (f[ip] != 0x45) malformed("unexpected IPv4 header shape", ip);
        if (get_be16(f, ip + 2) != incl - 14) malformed("IPv4 total length mismatch", ip + 2);
        if (f[ip + 9] != 17) malformed("not UDP", ip + 9);
        if (inet_checksum(f.subspan(ip, 20)) != 0) malformed("IPv4 checksum invalid", ip + 10);

        size_t udp = ip + 20;
        if (get_be16(f, udp + 4) != incl - 14 - 20) malformed("UDP length mismatch", udp + 4);

        size_t gt = udp + 8;
        if (f[gt] != 2) malformed("unsupported GSMTAP version", gt);
        if (f[gt + 1] != 4) malformed("unexpected GSMTAP header length", gt + 1);

        PcapRecord rec;
        rec.meta.type = f[gt + 2];
        rec.meta.arfcn = get_be16(f, gt + 4);
        rec.meta.frame_number = get_be32(f, gt + 8);
        rec.meta.sub_type = f[gt + 12];
        size_t pay = gt + 16;
        rec.payload.assign(f.begin() + pay, f.begin() + off + 16 + incl);
        out.push_back(std::move(rec));

        off += 16 + incl;
    }
    return out;
}

std::vector<PcapRecord> pcap_read_back_file(const std::filesystem::path& path) {
    std::vector<uint8_t> bytes = read_file(path);
    return pcap_read_back(bytes);
}

}  // namespace mrfuzz
