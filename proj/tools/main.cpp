#include <CLI11.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrfuzz/asm.hpp"
#include "mrfuzz/config.hpp"
#include "mrfuzz/corpus.hpp"
#include "mrfuzz/deduce.hpp"
#include "mrfuzz/fuzz.hpp"
#include "mrfuzz/pcapout.hpp"
#include "mrfuzz/util.hpp"

namespace fs = std::filesystem;
using namespace mrfuzz;

namespace {

std::string slurp(const fs::path& p) {
    std::vector<uint8_t> b = read_file(p);
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

// The image referenced by the config, or — so fresh checkouts work without a
// separate build step — its assembly source next to it.
std::vector<uint8_t> image_bytes(const HarnessConfig& cfg) {
    if (fs::exists(cfg.image_path)) return read_file(cfg.image_path);
    fs::path src = cfg.image_path;
    src.replace_extension(".s");
    if (fs::exists(src)) return assemble(slurp(src)).binary;
    throw Error(Err::Io,
                "image not found: " + cfg.image_path.string() + " (nor " + src.string() + ")");
}

// One configured machine, optionally with its heap sanitizer attached.
struct Rig {
    HarnessConfig cfg;
    Machine m;
    std::optional<Sanitizer> san;

    explicit Rig(const fs::path& config) {
        cfg = load_config(config);
        std::vector<uint8_t> img = image_bytes(cfg);
        apply_to_machine(cfg, m, img);
        if (cfg.sanitizer) san.emplace(m, cfg.sanitizer->arena, cfg.sanitizer->abi);
    }

    Sanitizer* sanitizer() { return san ? &*san : nullptr; }
};

std::vector<fs::path> sorted_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(Err::Io, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void print_outcome(const RunOutcome& o) {
    std::printf("stop=%s pc=0x%08x addr=0x%08x instructions=%llu exit_code=%u\n",
                stop_kind_name(o.stop.kind), o.stop.pc_at_stop, o.stop.addr,
                static_cast<unsigned long long>(o.stop.instructions), o.stop.exit_code);
    std::printf("class=%s\n", run_class_name(classify_run(o)));
    for (const CrashReport& f : o.findings) std::printf("finding: %s\n", f.to_json().c_str());
}

struct FuzzArgs {
    fs::path config;
    fs::path out;
    fs::path seeds;
    std::optional<uint64_t> seed;
    std::optional<uint64_t> budget_execs;
    std::optional<double> budget_secs;
    unsigned workers = 1;
};

FuzzBudget make_budget(const FuzzArgs& a) {
    FuzzBudget b;
    if (a.budget_execs) b.max_execs = *a.budget_execs;
    if (a.budget_secs) b.max_seconds = *a.budget_secs;
    return b;
}

// One campaign over the shared corpus directory; safe to run in a forked
// child because everything is rebuilt from the config path.
FuzzStats fuzz_worker(const FuzzArgs& a, uint64_t seed, const fs::path& status) {
    Rig rig(a.config);
    Campaign c(rig.m, rig.cfg.spec(), rig.sanitizer(), rig.cfg.map_size);
    CorpusStore store(a.out, rig.cfg.map_size);
    Xoshiro256ss rng(seed);
    Mutator mut(rng, rig.cfg.input_max_len);
    return fuzz(c, store, mut, rng, make_budget(a), status);
}

// Pulls one "key=value" line out of a status file.
std::optional<std::string> status_value(const fs::path& p, const std::string& key) {
    if (!fs::exists(p)) return std::nullopt;
    std::string text = slurp(p);
    size_t pos = text.find(key + "=");
    if (pos != 0 && (pos == std::string::npos || text[pos - 1] != '\n')) return std::nullopt;
    size_t start = pos + key.size() + 1;
    return text.substr(start, text.find('\n', start) - start);
}

int cmd_fuzz(const FuzzArgs& a) {
    fs::create_directories(a.out);

    {  // Import seeds (and pick up any previous queue) before spawning.
        Rig rig(a.config);
        Campaign c(rig.m, rig.cfg.spec(), rig.sanitizer(), rig.cfg.map_size);
        CorpusStore store(a.out, rig.cfg.map_size);
        size_t files = 0;
        if (!a.seeds.empty()) {
            for (const fs::path& p : sorted_files(a.seeds)) {
                std::vector<uint8_t> input = read_file(p);
                RunOutcome o = c.run_one(input);
                store.add_if_interesting(input, o, c.run_map());
                if (classify_run(o) == RunClass::Crash)
                    store.add_crash(input, crash_dedup_key(o, rig.m.last_block_pc()));
                ++files;
            }
        }
        if (store.size() == 0) {
            std::fprintf(stderr, "error: no seeds (%zu files imported, queue empty)\n", files);
            return 1;
        }
        std::printf("seeded: %zu queue entries from %zu files\n", store.size(), files);
    }

    uint64_t base_seed = a.seed.value_or(load_config(a.config).seed);

    if (a.workers <= 1) {
        FuzzStats s = fuzz_worker(a, base_seed, a.out / "status.txt");
        std::fputs(format_status(s).c_str(), stdout);
        std::printf("crash files under %s\n", (a.out / "crashes").c_str());
        return s.crashes > 0 ? 2 : 0;
    }

    // Independent campaigns share only the corpus directory.
    std::vector<pid_t> kids;
    for (unsigned i = 0; i < a.workers; ++i) {
        pid_t pid = fork();
        if (pid < 0) throw Error(Err::Io, "fork failed");
        if (pid == 0) {
            fs::path status = a.out / ("status.worker" + std::to_string(i) + ".txt");
            FuzzStats s = fuzz_worker(a, base_seed + i, status);
            _exit(s.crashes > 0 ? 2 : 0);
        }
        kids.push_back(pid);
    }
    bool worker_failed = false;
    for (pid_t pid : kids) {
        int wstatus = 0;
        waitpid(pid, &wstatus, 0);
        if (!WIFEXITED(wstatus) || WEXITSTATUS(wstatus) == 1) worker_failed = true;
    }

    // Aggregate: counters from the merged directory, execs summed over workers.
    CorpusStore store(a.out, load_config(a.config).map_size);
    FuzzStats total;
    for (unsigned i = 0; i < a.workers; ++i)
        if (auto e = status_execs(a.out / ("status.worker" + std::to_string(i) + ".txt")))
            total.execs += *e;
    total.paths = store.size();
    total.crashes = store.unique_crashes();
    total.hangs = store.unique_hangs();
    std::string text = format_status(total);
    write_file_atomic(a.out / "status.txt",
                      {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
    std::fputs(text.c_str(), stdout);
    if (worker_failed) return 1;
    return total.crashes > 0 ? 2 : 0;
}

struct StdoutTrace : TraceSink {
    void on_insn(const std::string& line) override {
        std::fputs(line.c_str(), stdout);
        std::fputc('\n', stdout);
    }
    void on_guest_byte(uint8_t b) override { std::fputc(b, stdout); }
};

int cmd_run(const fs::path& config, const fs::path& input_path, bool trace) {
    Rig rig(config);
    std::vector<uint8_t> input = read_file(input_path);
    HarnessSpec spec = rig.cfg.spec();

    if (trace) {
        place_input(rig.m, spec.placement, input, spec.input_max_len);
        rig.m.cpu().pc = spec.entry;
        StdoutTrace sink;
        StopReason stop = rig.m.trace_run(spec.exits, spec.max_instructions, sink);
        RunOutcome o;
        o.stop = stop;
        if (rig.sanitizer()) o.findings = rig.sanitizer()->take_findings();
        print_outcome(o);
        return classify_run(o) == RunClass::Crash ? 2 : 0;
    }

    Campaign c(rig.m, spec, rig.sanitizer(), rig.cfg.map_size);
    rig.m.set_guest_output([](uint8_t b) { std::fputc(b, stdout); });
    RunOutcome o = c.run_one(input);
    print_outcome(o);
    std::printf("edges=%zu\n", static_cast<size_t>(c.run_map().edge_count()));
    return classify_run(o) == RunClass::Crash ? 2 : 0;
}

int cmd_cmin(const fs::path& config, const fs::path& in_dir, const fs::path& out_dir) {
    Rig rig(config);
    Campaign c(rig.m, rig.cfg.spec(), rig.sanitizer(), rig.cfg.map_size);

    std::vector<std::vector<uint8_t>> inputs;
    for (const fs::path& p : sorted_files(in_dir)) inputs.push_back(read_file(p));
    if (inputs.empty()) throw Error(Err::EmptyCorpus, "no inputs in " + in_dir.string());

    std::vector<std::vector<uint8_t>> kept = cmin(c, inputs);
    fs::create_directories(out_dir);
    for (size_t i = 0; i < kept.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "min-%04zu.bin", i);
        write_file(out_dir / name, kept[i]);
    }
    std::printf("kept %zu of %zu inputs, classified edge union preserved\n", kept.size(),
                inputs.size());
    return 0;
}

int cmd_tmin(const fs::path& config, const fs::path& in_file, const fs::path& out_file,
             bool crash_mode) {
    Rig rig(config);
    Campaign c(rig.m, rig.cfg.spec(), rig.sanitizer(), rig.cfg.map_size);

    std::vector<uint8_t> input = read_file(in_file);
    std::vector<uint8_t> out = tmin(c, input, crash_mode ? TminMode::Crash : TminMode::Coverage);
    write_file(out_file, out);
    std::printf("minimized %zu -> %zu bytes (%s)\n", input.size(), out.size(),
                crash_mode ? "crash key preserved" : "coverage map preserved");
    return 0;
}

int cmd_deduce(const fs::path& config, const fs::path& msg_dir, const fs::path& out_dir,
               std::optional<uint64_t> seed) {
    Rig rig(config);
    if (rig.cfg.candidates.empty())
        throw Error(Err::Config, "config lists no [[candidate]] entries");

    std::vector<ParserCandidate> cands;
    for (const auto& cand : rig.cfg.candidates)
        cands.push_back({cand.name, apply_candidate(rig.cfg, cand).spec()});

    std::vector<std::vector<uint8_t>> msgs;
    for (const fs::path& p : sorted_files(msg_dir)) msgs.push_back(read_file(p));

    NoiseParams np;
    np.seed = seed.value_or(rig.cfg.seed);
    DeductionReport r = deduce(rig.m, cands, msgs, rig.sanitizer(), np, rig.cfg.map_size);

    std::fputs(format_report(r).c_str(), stdout);
    fs::create_directories(out_dir);
    std::string json = report_json(r);
    write_file(out_dir / "deduction.json", {reinterpret_cast<const uint8_t*>(json.data()),
                                            json.size()});
    return 0;
}

int cmd_pcap(const fs::path& in_dir, const fs::path& out_file, const GsmtapMeta& meta) {
    std::vector<std::vector<uint8_t>> inputs;
    for (const fs::path& p : sorted_files(in_dir)) inputs.push_back(read_file(p));
    pcap_export(inputs, meta, out_file);
    std::printf("wrote %zu records -> %s\n", inputs.size(), out_file.c_str());
    return 0;
}

int cmd_asm(const fs::path& in_file, const fs::path& out_file, const fs::path& sym_file) {
    AsmResult r = assemble(slurp(in_file));
    write_file(out_file, r.binary);
    if (!sym_file.empty()) {
        std::string text = symbol_table_text(r);
        write_file(sym_file, {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
    }
    std::printf("assembled %zu bytes at origin 0x%x -> %s\n", r.binary.size(), r.origin,
                out_file.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"snapshot-based coverage-guided fuzzer for rehosted firmware images"};
    app.require_subcommand(1);

    FuzzArgs fa;
    CLI::App* fuzz_cmd = app.add_subcommand("fuzz", "run a coverage-guided campaign");
    fuzz_cmd->add_option("--config", fa.config, "harness config file")->required();
    fuzz_cmd->add_option("--out", fa.out, "corpus directory")->required();
    fuzz_cmd->add_option("--seeds", fa.seeds, "directory of seed inputs");
    fuzz_cmd->add_option("--seed", fa.seed, "RNG seed (default: config)");
    fuzz_cmd->add_option("--budget-execs", fa.budget_execs, "stop after this many runs");
    fuzz_cmd->add_option("--budget-secs", fa.budget_secs, "stop after this much wall time");
    fuzz_cmd->add_option("--workers", fa.workers, "parallel campaigns sharing the corpus");

    fs::path run_config, run_input;
    bool run_trace = false;
    CLI::App* run_cmd = app.add_subcommand("run", "execute one input");
    run_cmd->add_option("--config", run_config, "harness config file")->required();
    run_cmd->add_option("input", run_input, "input file")->required();
    run_cmd->add_flag("--trace", run_trace, "print every instruction and guest output");

    fs::path cmin_config, cmin_in, cmin_out;
    CLI::App* cmin_cmd = app.add_subcommand("cmin", "corpus minimization");
    cmin_cmd->add_option("--config", cmin_config, "harness config file")->required();
    cmin_cmd->add_option("--in", cmin_in, "input corpus directory")->required();
    cmin_cmd->add_option("--out", cmin_out, "minimized corpus directory")->required();

    fs::path tmin_config, tmin_in, tmin_out;
    bool tmin_crash = false;
    CLI::App* tmin_cmd = app.add_subcommand("tmin", "test case minimization");
    tmin_cmd->add_option("--config", tmin_config, "harness config file")->required();
    tmin_cmd->add_option("--in", tmin_in, "input file")->required();
    tmin_cmd->add_option("--out", tmin_out, "minimized output file")->required();
    tmin_cmd->add_flag("--crash", tmin_crash, "preserve the crash dedup key instead of coverage");

    fs::path ded_config, ded_in, ded_out = ".";
    std::optional<uint64_t> ded_seed;
    CLI::App* ded_cmd = app.add_subcommand("deduce", "rank candidate parsers per message");
    ded_cmd->add_option("--config", ded_config, "config with [[candidate]] entries")->required();
    ded_cmd->add_option("--in", ded_in, "directory of message files")->required();
    ded_cmd->add_option("--out", ded_out, "directory for deduction.json");
    ded_cmd->add_option("--seed", ded_seed, "noise corpus seed (default: config)");

    fs::path pcap_in, pcap_out;
    GsmtapMeta meta;
    unsigned gsm_type = 0x0d, gsm_sub = 0, arfcn = 0;
    uint64_t frame = 0;
    CLI::App* pcap_cmd = app.add_subcommand("pcap", "wrap inputs as a GSMTAP capture");
    pcap_cmd->add_option("--in", pcap_in, "directory of payload files")->required();
    pcap_cmd->add_option("--out", pcap_out, "capture file to write")->required();
    pcap_cmd->add_option("--sub-type", gsm_sub, "GSMTAP channel sub_type")->required();
    pcap_cmd->add_option("--gsm-type", gsm_type, "GSMTAP payload type");
    pcap_cmd->add_option("--arfcn", arfcn, "GSMTAP arfcn field");
    pcap_cmd->add_option("--frame", frame, "GSMTAP frame number");

    fs::path asm_in, asm_out, asm_syms;
    CLI::App* asm_cmd = app.add_subcommand("asm", "assemble a guest image");
    asm_cmd->add_option("--in", asm_in, "assembly source")->required();
    asm_cmd->add_option("--out", asm_out, "flat binary to write")->required();
    asm_cmd->add_option("--symbols", asm_syms, "also write the symbol table here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fuzz_cmd->parsed()) return cmd_fuzz(fa);
        if (run_cmd->parsed()) return cmd_run(run_config, run_input, run_trace);
        if (cmin_cmd->parsed()) return cmd_cmin(cmin_config, cmin_in, cmin_out);
        if (tmin_cmd->parsed()) return cmd_tmin(tmin_config, tmin_in, tmin_out, tmin_crash);
        if (ded_cmd->parsed()) return cmd_deduce(ded_config, ded_in, ded_out, ded_seed);
        if (pcap_cmd->parsed()) {
            meta.type = static_cast<uint8_t>(gsm_type);
            meta.sub_type = static_cast<uint8_t>(gsm_sub);
            meta.arfcn = static_cast<uint16_t>(arfcn);
            meta.frame_number = static_cast<uint32_t>(frame);
            return cmd_pcap(pcap_in, pcap_out, meta);
        }
        if (asm_cmd->parsed()) return cmd_asm(asm_in, asm_out, asm_syms);
    } catch (const Error& e) {
        std::string where;
        bool line_coded = e.code() == Err::Config || e.code() == Err::UndefinedLabel ||
                          e.code() == Err::BadMnemonic || e.code() == Err::RangeError;
        if (line_coded && e.detail() > 0)
            where = " (line " + std::to_string(e.detail()) + ")";
        else if (e.code() == Err::Malformed)
            where = " (offset " + std::to_string(e.detail()) + ")";
        std::fprintf(stderr, "error: %s%s\n", e.what(), where.c_str());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
