#include "cli.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <mutex>
#include <optional>
#include <ostream>

#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "dsakv/atomic_file.hpp"
#include "dsakv/cache_sim.hpp"
#include "dsakv/keyvalue.hpp"
#include "dsakv/metrics.hpp"
#include "dsakv/report_io.hpp"
#include "dsakv/roofline.hpp"
#include "dsakv/synth.hpp"
#include "dsakv/trace_io.hpp"
#include "json.hpp"

namespace dsakv::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GenerateOpts {
    std::string config;
    std::uint32_t count = 1;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint32_t> layers;
    std::optional<std::uint32_t> page_size;
    std::string trace_format = "binary";
    std::string out;
};

struct AnalyzeOpts {
    std::vector<std::string> inputs;
    std::optional<std::uint32_t> window;
    std::optional<std::uint32_t> window_stride;
    std::optional<std::uint32_t> page_size;
    std::string format = "json,csv";
    std::string out;
};

struct SimOpts {
    std::vector<std::string> inputs;
    std::optional<std::string> config;
    std::optional<std::string> reserved;
    std::optional<std::uint32_t> layers;
    std::optional<std::uint32_t> batch;
    std::optional<double> miss_latency_ns;
    std::optional<double> bandwidth;
    std::optional<std::uint32_t> page_size;
    std::optional<std::uint32_t> miss_concurrency;
    std::string format = "json,csv";
    std::string out;
};

struct RooflineOpts {
    std::vector<std::string> inputs;
    std::string format = "json,csv";
    std::string out;
};

struct RerunOpts {
    std::string manifest;
    std::optional<std::string> out;
};

/// Everything that ends up in manifest.json.
struct Session {
    std::string command;
    std::vector<std::string> args;
    std::vector<std::string> config_files;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    fs::path out_dir;

    void emit(const std::string& name, std::string_view contents) {
        write_file_atomic(out_dir / name, contents);
        outputs.push_back(name);
        spdlog::debug("wrote {}", (out_dir / name).string());
    }
};

std::string absolute_str(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        if (comma > pos) parts.push_back(text.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return parts;
}

std::vector<std::string> parse_formats(const std::string& text, std::initializer_list<std::string_view> allowed) {
    std::vector<std::string> formats = split_list(text);
    if (formats.empty()) throw std::invalid_argument("--format needs at least one entry");
    for (const auto& f : formats) {
        if (std::find(allowed.begin(), allowed.end(), f) == allowed.end()) {
            throw std::invalid_argument("unsupported --format entry '" + f + "' for this command");
        }
    }
    return formats;
}

bool wants(const std::vector<std::string>& formats, std::string_view f) {
    return std::find(formats.begin(), formats.end(), f) != formats.end();
}

bool is_trace_file(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".dsat" || ext == ".jsonl";
}

std::vector<fs::path> sorted_matches(const fs::path& dir, const std::function<bool(const fs::path&)>& keep) {
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && keep(entry.path())) found.push_back(entry.path());
    std::sort(found.begin(), found.end());
    return found;
}

/// Files, directories (all .dsat/.jsonl inside) and filename wildcards.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& specs) {
    std::vector<fs::path> files;
    for (const auto& spec : specs) {
        const fs::path p(spec);
        std::vector<fs::path> found;
        if (spec.find_first_of("*?[") != std::string::npos) {
            const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
            const std::string pattern = p.filename().string();
            if (!fs::is_directory(dir)) throw IoFailure("no such directory: " + dir.string());
            found = sorted_matches(dir, [&](const fs::path& f) {
                return ::fnmatch(pattern.c_str(), f.filename().c_str(), 0) == 0;
            });
        } else if (fs::is_directory(p)) {
            found = sorted_matches(p, is_trace_file);
        } else if (fs::exists(p)) {
            found.push_back(p);
        } else {
            throw IoFailure("no such file: " + spec);
        }
        if (found.empty()) throw IoFailure("no trace files match '" + spec + "'");
        for (auto& f : found) files.push_back(fs::absolute(f).lexically_normal());
    }
    return files;
}

std::vector<Trace> load_traces(const std::vector<fs::path>& files) {
    std::vector<Trace> traces;
    traces.reserve(files.size());
    for (const auto& f : files) {
        try {
            traces.push_back(read_trace_file(f));
        } catch (const TraceFormatError& e) {
            throw TraceFormatError(e.kind(), e.offset(), f.string() + ": " + e.what());
        } catch (const std::runtime_error& e) {
            throw IoFailure(e.what());
        }
    }
    spdlog::info("loaded {} trace(s)", traces.size());
    return traces;
}

void record_inputs(Session& s, const std::vector<fs::path>& files) {
    for (const auto& f : files) {
        s.inputs.push_back(f.string());
        s.args.push_back(f.string());
    }
}

template <class T>
void push_opt(std::vector<std::string>& args, const char* flag, const std::optional<T>& v) {
    if (!v) return;
    args.push_back(flag);
    if constexpr (std::is_same_v<T, std::string>) args.push_back(*v);
    else if constexpr (std::is_floating_point_v<T>) args.push_back(format_double(*v));
    else args.push_back(std::to_string(*v));
}

// ---- commands --------------------------------------------------------------

void cmd_generate(const GenerateOpts& o, Session& s, std::ostream& out) {
    auto [config, params] = load_gen_config(o.config);
    if (o.seed) config.seed = *o.seed;
    if (o.layers) config.n_layers = *o.layers;
    if (o.page_size) config.page_size_tokens = *o.page_size;
    config.validate();
    if (o.count == 0) throw std::invalid_argument("--count must be >= 1");
    const TraceFormat format = parse_trace_format(o.trace_format);
    const char* ext = format == TraceFormat::binary ? ".dsat" : ".jsonl";

    s.config_files.push_back(absolute_str(o.config));
    s.args = {"generate", "--config", absolute_str(o.config), "--count", std::to_string(o.count), "--seed",
              std::to_string(config.seed)};
    push_opt(s.args, "--layers", o.layers);
    push_opt(s.args, "--page-size", o.page_size);
    s.args.insert(s.args.end(), {"--trace-format", o.trace_format});

    for (std::uint32_t i = 0; i < o.count; ++i) {
        GenConfig c = config;
        c.seed = config.seed + i;
        char name[48];
        std::snprintf(name, sizeof name, "trace_%04u%s", i, ext);
        s.emit(name, encode_trace(generate_trace(c, params), format));
        s.seeds.push_back(c.seed);
        spdlog::info("generated {} (seed {})", name, c.seed);
    }
    s.emit("generator.cfg", gen_config_to_text(config, params));
    out << "generated " << o.count << " trace(s) in " << s.out_dir.string() << "\n";
}

void cmd_analyze(const AnalyzeOpts& o, Session& s, std::ostream& out) {
    const auto formats = parse_formats(o.format, {"json", "csv", "svg"});
    AnalysisConfig config;
    if (o.window) config.window_N = *o.window;
    if (o.window_stride) config.window_stride = *o.window_stride;
    if (o.page_size) config.page_size_tokens = *o.page_size;
    config.validate();

    const auto files = expand_inputs(o.inputs);
    s.args = {"analyze"};
    record_inputs(s, files);
    push_opt(s.args, "--window", o.window);
    push_opt(s.args, "--window-stride", o.window_stride);
    push_opt(s.args, "--page-size", o.page_size);
    s.args.insert(s.args.end(), {"--format", o.format});

    const auto traces = load_traces(files);
    const MetricsReport report = build_report(traces, config);
    if (report.short_traces > 0) {
        spdlog::warn("{} trace(s) shorter than the {}-step window add no working-set samples", report.short_traces,
                     config.window_N);
    }

    if (wants(formats, "json")) s.emit("report.json", report_to_json(report));
    if (wants(formats, "csv")) {
        s.emit("summary.csv", report_summary_csv(report));
        s.emit("layers.csv", report_layers_csv(report));
    }
    if (wants(formats, "svg")) {
        for (const auto& m : report.metrics)
            s.emit(std::string("hist_") + metric_name(m.metric) + ".svg", histogram_svg(m));
    }

    char line[160];
    std::snprintf(line, sizeof line, "%-18s %10s %10s  %s\n", "metric", "mean", "p95", "unit");
    out << line;
    for (const auto& m : report.metrics) {
        if (!m.stats) {
            std::snprintf(line, sizeof line, "%-18s %10s %10s  %s\n", metric_name(m.metric), "-", "-",
                          metric_unit(m.metric));
        } else {
            std::snprintf(line, sizeof line, "%-18s %10.4f %10.4f  %s\n", metric_name(m.metric), m.stats->mean,
                          m.stats->p95, metric_unit(m.metric));
        }
        out << line;
    }
}

CacheConfig resolve_cache_config(const SimOpts& o, Session& s) {
    CacheConfig c;
    if (o.config) {
        c = load_cache_config(*o.config);
        s.config_files.push_back(absolute_str(*o.config));
        s.args.insert(s.args.end(), {"--config", absolute_str(*o.config)});
    }
    if (o.layers) c.layers_per_device = *o.layers;
    if (o.batch) c.batch_size = *o.batch;
    if (o.miss_latency_ns) c.miss_latency_ns = *o.miss_latency_ns;
    if (o.bandwidth) c.hbm_bandwidth = *o.bandwidth;
    if (o.page_size) c.page_size_tokens = *o.page_size;
    if (o.miss_concurrency) c.miss_concurrency = *o.miss_concurrency;
    push_opt(s.args, "--layers", o.layers);
    push_opt(s.args, "--batch", o.batch);
    push_opt(s.args, "--miss-latency-ns", o.miss_latency_ns);
    push_opt(s.args, "--bandwidth", o.bandwidth);
    push_opt(s.args, "--page-size", o.page_size);
    push_opt(s.args, "--miss-concurrency", o.miss_concurrency);
    c.validate();
    return c;
}

void cmd_simulate(const SimOpts& o, Session& s, std::ostream& out) {
    const auto formats = parse_formats(o.format, {"json", "csv"});
    const auto files = expand_inputs(o.inputs);
    s.args = {"simulate"};
    record_inputs(s, files);
    CacheConfig config = resolve_cache_config(o, s);
    if (o.reserved) {
        const auto sizes = parse_byte_list(*o.reserved);
        if (sizes.size() != 1) throw std::invalid_argument("simulate takes one --reserved size; use sweep for a list");
        config.reserved_bytes = sizes.front();
    }
    push_opt(s.args, "--reserved", o.reserved);
    s.args.insert(s.args.end(), {"--format", o.format});

    const auto traces = load_traces(files);
    const SimResult result = simulate(traces, config);
    if (wants(formats, "json")) s.emit("sim.json", sim_result_to_json(result, config));
    if (wants(formats, "csv")) s.emit("steps.csv", sim_steps_to_csv(result));
    s.emit("cache.cfg", cache_config_to_text(config));

    char line[200];
    std::snprintf(line, sizeof line, "reserved %llu B (%llu tokens): hit rate %.4f, slowdown %.4f\n",
                  static_cast<unsigned long long>(config.reserved_bytes),
                  static_cast<unsigned long long>(result.capacity_tokens), result.hit_rate(), result.slowdown);
    out << line;
}

void cmd_sweep(const SimOpts& o, Session& s, std::ostream& out) {
    const auto formats = parse_formats(o.format, {"json", "csv"});
    const auto files = expand_inputs(o.inputs);
    s.args = {"sweep"};
    record_inputs(s, files);
    const CacheConfig config = resolve_cache_config(o, s);
    const std::string reserved = o.reserved.value_or("0,5MB,10MB,15MB,20MB");
    const auto sizes = parse_byte_list(reserved);
    s.args.insert(s.args.end(), {"--reserved", reserved, "--format", o.format});

    const auto traces = load_traces(files);
    const auto rows = sweep(traces, config, sizes);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].reserved_bytes >= rows[i - 1].reserved_bytes && rows[i].slowdown > rows[i - 1].slowdown) {
            spdlog::warn("slowdown rises from {} to {} between {} and {} bytes", rows[i - 1].slowdown,
                         rows[i].slowdown, rows[i - 1].reserved_bytes, rows[i].reserved_bytes);
        }
    }
    if (wants(formats, "csv")) s.emit("sweep.csv", sweep_to_csv(rows));
    if (wants(formats, "json")) s.emit("sweep.json", sweep_to_json(rows, config));
    const std::string table = format_slowdown_table(rows);
    s.emit("sweep.txt", table);
    s.emit("cache.cfg", cache_config_to_text(config));
    out << table;
}

void cmd_roofline(const RooflineOpts& o, Session& s, std::ostream& out) {
    const auto formats = parse_formats(o.format, {"json", "csv"});
    s.args = {"roofline"};
    std::vector<RooflineRow> rows;
    for (const auto& path : o.inputs) {
        const std::string abs = absolute_str(path);
        s.config_files.push_back(abs);
        s.inputs.push_back(abs);
        s.args.push_back(abs);
        rows.push_back(evaluate(load_roofline(path)));
    }
    s.args.insert(s.args.end(), {"--format", o.format});
    if (wants(formats, "json")) s.emit("roofline.json", roofline_to_json(rows));
    if (wants(formats, "csv")) s.emit("roofline.csv", roofline_to_csv(rows));

    char line[200];
    std::snprintf(line, sizeof line, "%-20s %8s %8s %9s\n", "backbone", "devices", "HBM BW", "compute");
    out << line;
    for (const auto& r : rows) {
        if (!r.plan.devices) {
            std::snprintf(line, sizeof line, "%-20s %8s %8s %9s\n", r.name.c_str(), "n/a", "-", "-");
        } else {
            std::snprintf(line, sizeof line, "%-20s %8llu %7.1f%% %8.2f%%\n", r.name.c_str(),
                          static_cast<unsigned long long>(*r.plan.devices), 100.0 * r.plan.per_device.bandwidth,
                          100.0 * r.plan.per_device.compute);
        }
        out << line;
    }
}

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    ::gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const Session& s, const std::string& started, double seconds) {
    ordered_json j;
    j["tool"] = "dsa-kv";
    j["version"] = DSAKV_VERSION;
    j["command"] = s.command;
    j["args"] = s.args;
    j["config_files"] = s.config_files;
    j["seeds"] = s.seeds;
    j["inputs"] = s.inputs;
    j["outputs"] = s.outputs;
    j["out_dir"] = absolute_str(s.out_dir);
    j["started_utc"] = started;
    j["wall_clock_seconds"] = seconds;
    write_file_atomic(s.out_dir / "manifest.json", j.dump(2) + "\n");
}

std::vector<std::string> rerun_args(const RerunOpts& o) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_file(o.manifest));
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(o.manifest + ": not a manifest: " + e.what());
    } catch (const std::runtime_error& e) {
        throw IoFailure(e.what());
    }
    if (!j.is_object() || j.value("tool", "") != "dsa-kv" || !j.contains("args") || !j.contains("out_dir")) {
        throw IoFailure(o.manifest + ": not a dsa-kv manifest");
    }
    auto args = j["args"].get<std::vector<std::string>>();
    if (args.empty() || args.front() == "rerun") throw IoFailure(o.manifest + ": manifest has no command");
    args.insert(args.end(), {"--out", o.out.value_or(j["out_dir"].get<std::string>())});
    return args;
}

void init_logging() {
    static std::once_flag once;
    std::call_once(once, [] {
        auto logger = spdlog::stderr_color_mt("dsa-kv");
        logger->set_pattern("[%l] %v");
        spdlog::set_default_logger(logger);
        spdlog::set_level(spdlog::level::warn);
        spdlog::cfg::load_env_levels();
    });
}

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        body();
        return ok;
    } catch (const ConfigReadError& e) {
        err << "error: " << e.what() << "\n";
        return io_error;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return semantic_error;
    } catch (const TraceFormatError& e) {
        err << "error: " << e.what() << "\n";
        return io_error;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return semantic_error;
    } catch (const std::logic_error& e) {
        err << "error: " << e.what() << "\n";
        return semantic_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return io_error;
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    init_logging();

    CLI::App app{"Trace generation, access-pattern analysis and reserved-cache simulation for sparse-attention KV "
                 "traces",
                 "dsa-kv"};
    app.set_version_flag("--version", DSAKV_VERSION);
    app.require_subcommand(1);

    GenerateOpts gen;
    auto* g = app.add_subcommand("generate", "Write synthetic traces from a generator config");
    g->add_option("--config", gen.config, "Generator key=value file")->required();
    g->add_option("--count", gen.count, "Number of traces (seeds seed..seed+count-1)");
    g->add_option("--seed", gen.seed, "Base seed (overrides the config)");
    g->add_option("--layers", gen.layers, "Layer count (overrides the config)");
    g->add_option("--page-size", gen.page_size, "Page size recorded in the trace header");
    g->add_option("--trace-format", gen.trace_format, "binary or jsonl")
        ->check(CLI::IsMember({"binary", "jsonl"}));
    g->add_option("--out", gen.out, "Output directory")->required();

    AnalyzeOpts an;
    auto* a = app.add_subcommand("analyze", "Access-pattern statistics over a trace corpus");
    a->add_option("inputs", an.inputs, "Trace files, directories or filename wildcards")->required();
    a->add_option("--window", an.window, "Working-set window N (steps)");
    a->add_option("--window-stride", an.window_stride, "Window stride (N gives disjoint chunks)");
    a->add_option("--page-size", an.page_size, "Page size in tokens (default: from each trace)");
    a->add_option("--format", an.format, "Comma list of json,csv,svg");
    a->add_option("--out", an.out, "Output directory")->required();

    SimOpts sim;
    SimOpts sw;
    auto add_sim_options = [](CLI::App* cmd, SimOpts& o, const char* reserved_help) {
        cmd->add_option("inputs", o.inputs, "Trace files (one tenant each), directories or wildcards")->required();
        cmd->add_option("--config", o.config, "Cache key=value file");
        cmd->add_option("--reserved", o.reserved, reserved_help);
        cmd->add_option("--layers", o.layers, "Layers per device");
        cmd->add_option("--batch", o.batch, "Tenants per device");
        cmd->add_option("--miss-latency-ns", o.miss_latency_ns, "Latency of one missed page fetch");
        cmd->add_option("--bandwidth", o.bandwidth, "HBM bandwidth in bytes/s");
        cmd->add_option("--page-size", o.page_size, "Page size in tokens");
        cmd->add_option("--miss-concurrency", o.miss_concurrency, "Page fetches overlapped per layer-step");
        cmd->add_option("--format", o.format, "Comma list of json,csv");
        cmd->add_option("--out", o.out, "Output directory")->required();
    };
    auto* s = app.add_subcommand("simulate", "Replay traces through the reserved LL-cache model");
    add_sim_options(s, sim, "Reserved size, e.g. 10MB (KB/MB/GB are 1024-based)");
    auto* w = app.add_subcommand("sweep", "Slowdown across reserved sizes");
    add_sim_options(w, sw, "Comma list of sizes (default 0,5MB,10MB,15MB,20MB)");

    RooflineOpts rf;
    auto* r = app.add_subcommand("roofline", "Bandwidth/compute utilization from assumption files");
    r->add_option("inputs", rf.inputs, "Assumption files")->required();
    r->add_option("--format", rf.format, "Comma list of json,csv");
    r->add_option("--out", rf.out, "Output directory")->required();

    RerunOpts re;
    auto* rr = app.add_subcommand("rerun", "Repeat the command recorded in a manifest");
    rr->add_option("manifest", re.manifest, "manifest.json")->required();
    rr->add_option("--out", re.out, "Output directory (default: the recorded one)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : semantic_error;
    }

    if (rr->parsed()) {
        std::vector<std::string> replay;
        const int code = guarded(err, [&] { replay = rerun_args(re); });
        if (code != ok) return code;
        std::string joined;
        for (const auto& arg : replay) joined += " " + arg;
        spdlog::info("rerunning:{}", joined);
        return run(replay, out, err);
    }

    const auto started = std::chrono::steady_clock::now();
    const std::string started_utc = utc_now();
    Session session;
    return guarded(err, [&] {
        std::function<void()> body;
        std::string out_dir;
        if (g->parsed()) {
            session.command = "generate";
            out_dir = gen.out;
            body = [&] { cmd_generate(gen, session, out); };
        } else if (a->parsed()) {
            session.command = "analyze";
            out_dir = an.out;
            body = [&] { cmd_analyze(an, session, out); };
        } else if (s->parsed()) {
            session.command = "simulate";
            out_dir = sim.out;
            body = [&] { cmd_simulate(sim, session, out); };
        } else if (w->parsed()) {
            session.command = "sweep";
            out_dir = sw.out;
            body = [&] { cmd_sweep(sw, session, out); };
        } else {
            session.command = "roofline";
            out_dir = rf.out;
            body = [&] { cmd_roofline(rf, session, out); };
        }
        session.out_dir = out_dir;
        fs::create_directories(session.out_dir);
        body();
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        write_manifest(session, started_utc, seconds);
    });
}

}  // namespace dsakv::cli
