#include "mrfuzz/corpus.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <string>
#include <unordered_map>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrfuzz {
namespace {

uint64_t entry_score(const QueueEntry& e) {
    return static_cast<uint64_t>(e.len()) * std::max<uint64_t>(e.instructions, 1);
}

std::string queue_name(uint64_t id) { return "id-" + std::to_string(id) + ".bin"; }

// Serializes read-merge-write commits on one corpus directory, so workers in
// other processes cannot claim the same queue id or clobber a merge.
struct DirLock {
    int fd;
    explicit DirLock(const fs::path& dir)
        : fd(::open((dir / ".lock").c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644)) {
        if (fd >= 0) ::flock(fd, LOCK_EX);
    }
    ~DirLock() {
        if (fd >= 0) ::close(fd);  // closing drops the lock
    }
};

bool dir_has_prefix(const fs::path& dir, const std::string& prefix) {
    for (const auto& ent : fs::directory_iterator(dir))
        if (ent.path().filename().string().starts_with(prefix)) return true;
    return false;
}

}  // namespace

CorpusStore::CorpusStore(fs::path dir, size_t map_size)
    : m_dir(std::move(dir)), m_map_size(map_size), m_seen(map_size, 0) {
    if (map_size == 0 || !std::has_single_bit(map_size))
        throw Error(Err::SizeMismatch, "map size must be a power of two");
    fs::create_directories(m_dir / "queue");
    fs::create_directories(m_dir / "crashes");
    fs::create_directories(m_dir / "hangs");
    // Recover crash/hang identities from the committed filenames.
    auto scan = [](const fs::path& d, const std::string& prefix, std::set<uint64_t>& keys,
                   uint64_t& seq) {
        for (const auto& ent : fs::directory_iterator(d)) {
            std::string name = ent.path().filename().string();
            if (name.size() < prefix.size() + 16 || name.compare(0, prefix.size(), prefix))
                continue;
            keys.insert(std::stoull(name.substr(prefix.size(), 16), nullptr, 16));
            ++seq;
        }
    };
    scan(m_dir / "crashes", "crash-", m_crash_keys, m_crash_seq);
    scan(m_dir / "hangs", "hang-", m_hang_digests, m_hang_seq);
    refresh();
}

void CorpusStore::refresh() {
    fs::path map_path = m_dir / "global.map";
    if (fs::exists(map_path)) {
        std::vector<uint8_t> disk = read_file(map_path);
        if (disk.size() != m_map_size)
            throw Error(Err::SizeMismatch, "global.map size does not match the campaign");
        accumulate_new_bits(m_seen, disk);
    }
    merge_index_file();
}

void CorpusStore::merge_index_file() {
    fs::path idx = m_dir / "index.jsonl";
    if (!fs::exists(idx)) return;
    std::vector<uint8_t> raw = read_file(idx);
    std::string text(reinterpret_cast<const char*>(raw.data()), raw.size());

    std::set<uint64_t> known;
    for (const QueueEntry& e : m_entries) known.insert(e.id);

    size_t pos = 0;
    bool added = false;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        json j = json::parse(line);
        uint64_t id = j.at("id").get<uint64_t>();
        if (known.count(id)) continue;
        QueueEntry e;
        e.id = id;
        e.input = read_file(m_dir / j.at("file").get<std::string>());
        e.map_digest = std::stoull(j.at("digest").get<std::string>(), nullptr, 16);
        e.instructions = j.at("instructions").get<uint64_t>();
        e.exec_time = std::chrono::nanoseconds(j.at("exec_ns").get<uint64_t>());
        e.edges = j.at("edges").get<std::vector<uint32_t>>();
        m_entries.push_back(std::move(e));
        added = true;
    }
    if (added) {
        std::sort(m_entries.begin(), m_entries.end(),
                  [](const QueueEntry& a, const QueueEntry& b) { return a.id < b.id; });
        m_cull_dirty = true;
    }
}

void CorpusStore::write_index() const {
    std::string out;
    for (const QueueEntry& e : m_entries) {
        json j{{"id", e.id},
               {"file", "queue/" + queue_name(e.id)},
               {"len", e.len()},
               {"digest", hex64(e.map_digest)},
               {"instructions", e.instructions},
               {"exec_ns", static_cast<uint64_t>(e.exec_time.count())},
               {"edges", e.edges}};
        out += j.dump();
        out += '\n';
    }
    write_file_atomic(m_dir / "index.jsonl",
                      std::span<const uint8_t>(
                          reinterpret_cast<const uint8_t*>(out.data()), out.size()));
}

void CorpusStore::commit_entry(const QueueEntry& e) {
    write_file_atomic(m_dir / "queue" / queue_name(e.id), e.input);
    write_index();
    write_file_atomic(m_dir / "global.map", m_seen);
}

bool CorpusStore::add_if_interesting(std::span<const uint8_t> input,
                                     std::span<const uint8_t> classified,
                                     uint64_t instructions,
                                     std::chrono::nanoseconds exec_time) {
    if (classified.size() != m_map_size)
        throw Error(Err::SizeMismatch, "classified map size mismatch");
    // Cheap local rejection first; only novelty pays for a disk merge.
    bool fresh = false;
    for (size_t i = 0; i < m_map_size && !fresh; ++i)
        fresh = (classified[i] & ~m_seen[i]) != 0;
    if (!fresh) return false;

    DirLock lock(m_dir);
    refresh();  // another worker may have beaten us to these buckets
    if (!accumulate_new_bits(m_seen, classified)) return false;

    QueueEntry e;
    e.id = m_entries.empty() ? 0 : m_entries.back().id + 1;
    e.input.assign(input.begin(), input.end());
    e.map_digest = fnv1a64(classified);
    for (uint32_t i = 0; i < m_map_size; ++i)
        if (classified[i]) e.edges.push_back(i);
    e.instructions = instructions;
    e.exec_time = exec_time;
    m_entries.push_back(std::move(e));
    commit_entry(m_entries.back());
    m_cull_dirty = true;
    return true;
}

bool CorpusStore::add_if_interesting(std::span<const uint8_t> input, const RunOutcome& o,
                                     const CoverageMap& run_map) {
    return add_if_interesting(input, run_map.classified(), o.stop.instructions,
                              o.exec_time);
}

bool CorpusStore::add_crash(std::span<const uint8_t> input, uint64_t dedup_key) {
    if (!m_crash_keys.insert(dedup_key).second) return false;
    DirLock lock(m_dir);
    if (dir_has_prefix(m_dir / "crashes", "crash-" + hex64(dedup_key)))
        return false;  // another worker already filed this key
    write_file_atomic(m_dir / "crashes" /
                          ("crash-" + hex64(dedup_key) + "-" +
                           std::to_string(m_crash_seq++) + ".bin"),
                      input);
    return true;
}

bool CorpusStore::add_hang(std::span<const uint8_t> input) {
    uint64_t digest = fnv1a64(input);
    if (!m_hang_digests.insert(digest).second) return false;
    DirLock lock(m_dir);
    if (dir_has_prefix(m_dir / "hangs", "hang-" + hex64(digest))) return false;
    write_file_atomic(m_dir / "hangs" /
                          ("hang-" + hex64(digest) + "-" +
                           std::to_string(m_hang_seq++) + ".bin"),
                      input);
    return true;
}

void CorpusStore::cull() {
    if (!m_cull_dirty) return;
    for (QueueEntry& e : m_entries) e.favored = false;
    std::unordered_map<uint32_t, QueueEntry*> best;
    for (QueueEntry& e : m_entries) {  // ascending id: ties stay with the older entry
        uint64_t score = entry_score(e);
        for (uint32_t idx : e.edges) {
            QueueEntry*& b = best[idx];
            if (!b || score < entry_score(*b)) b = &e;
        }
    }
    for (auto& [idx, e] : best) e->favored = true;
    m_cull_dirty = false;
}

size_t CorpusStore::favored_count() {
    cull();
    return static_cast<size_t>(
        std::count_if(m_entries.begin(), m_entries.end(),
                      [](const QueueEntry& e) { return e.favored; }));
}

const QueueEntry& CorpusStore::pick_next(Xoshiro256ss& rng) {
    if (m_entries.empty()) throw Error(Err::EmptyCorpus, "corpus has no entries");
    cull();
    std::vector<size_t> favored;
    for (size_t i = 0; i < m_entries.size(); ++i)
        if (m_entries[i].favored) favored.push_back(i);
    if (!favored.empty() && rng.chance(0.8))
        return m_entries[favored[rng.below(favored.size())]];
    return m_entries[rng.below(m_entries.size())];
}

std::vector<std::vector<uint8_t>> cmin(Campaign& c,
                                       const std::vector<std::vector<uint8_t>>& inputs) {
    // Edge identity is (cell, bucket): a hotter loop is a different behavior
    // than a colder one, so both witnesses survive.
    std::unordered_map<uint64_t, size_t> best;  // edge -> input index
    std::vector<std::vector<std::pair<uint32_t, uint8_t>>> edges(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) {
        c.run_one(inputs[i]);
        std::vector<uint8_t> cls = c.run_map().classified();
        for (uint32_t idx = 0; idx < cls.size(); ++idx)
            if (cls[idx]) edges[i].push_back({idx, cls[idx]});
        for (auto [idx, bucket] : edges[i]) {
            uint64_t key = (static_cast<uint64_t>(idx) << 8) | bucket;
            auto it = best.find(key);
            if (it == best.end() || inputs[i].size() < inputs[it->second].size())
                best[key] = i;
        }
    }
    std::vector<bool> keep(inputs.size(), false);
    for (auto& [key, i] : best) keep[i] = true;
    std::vector<std::vector<uint8_t>> out;
    for (size_t i = 0; i < inputs.size(); ++i)
        if (keep[i]) out.push_back(inputs[i]);
    return out;
}

std::vector<uint8_t> tmin(Campaign& c, std::span<const uint8_t> input, TminMode mode) {
    std::vector<uint8_t> cur(input.begin(), input.end());
    if (cur.empty()) return cur;

    RunOutcome first = c.run_one(cur);
    std::vector<uint8_t> want_map = c.run_map().classified();
    uint64_t want_key = 0;
    if (mode == TminMode::Crash) {
        if (classify_run(first) != RunClass::Crash)
            throw Error(Err::NotCrashing, "input does not crash; nothing to preserve");
        want_key = crash_dedup_key(first, c.machine().last_block_pc());
    }

    auto acceptable = [&](const std::vector<uint8_t>& cand) {
        RunOutcome o = c.run_one(cand);
        if (mode == TminMode::Coverage) return c.run_map().classified() == want_map;
        return classify_run(o) == RunClass::Crash &&
               crash_dedup_key(o, c.machine().last_block_pc()) == want_key;
    };

    // Remove blocks, halving the block size down to single bytes; repeat
    // until a full sweep removes nothing.
    bool changed = true;
    while (changed && !cur.empty()) {
        changed = false;
        for (size_t s = std::bit_floor(std::max<size_t>(cur.size() / 2, 1)); s >= 1;
             s >>= 1) {
            size_t pos = 0;
            while (pos + s <= cur.size()) {
                std::vector<uint8_t> cand;
                cand.reserve(cur.size() - s);
                cand.insert(cand.end(), cur.begin(), cur.begin() + pos);
                cand.insert(cand.end(), cur.begin() + pos + s, cur.end());
                if (acceptable(cand)) {
                    cur = std::move(cand);
                    changed = true;
                } else {
                    pos += s;
                }
            }
        }
    }

    // Normalize surviving bytes to a canonical filler where behavior allows.
    for (size_t i = 0; i < cur.size(); ++i) {
        if (cur[i] == 0x41) continue;
        std::vector<uint8_t> cand = cur;
        cand[i] = 0x41;
        if (acceptable(cand)) cur = std::move(cand);
    }
    return cur;
}

}  // namespace mrfuzz
