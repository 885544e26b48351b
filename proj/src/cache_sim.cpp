#include "dsakv/cache_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "dsakv/atomic_file.hpp"
#include "dsakv/keyvalue.hpp"
#include "json.hpp"

namespace dsakv {

void CacheConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("CacheConfig: " + msg); };
    if (kv_token_bytes == 0) fail("kv_token_bytes must be >= 1");
    if (page_size_tokens == 0) fail("page_size_tokens must be >= 1");
    if (!(miss_latency_ns >= 0.0) || !std::isfinite(miss_latency_ns)) fail("miss_latency_ns must be >= 0");
    if (!(hbm_bandwidth > 0.0) || !std::isfinite(hbm_bandwidth)) fail("hbm_bandwidth must be > 0");
    if (layers_per_device == 0) fail("layers_per_device must be >= 1");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (miss_concurrency == 0) fail("miss_concurrency must be >= 1");
}

namespace {

void check_traces(std::span<const Trace> traces, const CacheConfig& cfg) {
    if (traces.empty()) throw std::invalid_argument("simulate: no traces");
    if (traces.size() > cfg.batch_size) {
        throw std::invalid_argument("simulate: " + std::to_string(traces.size()) + " tenants exceed batch_size " +
                                    std::to_string(cfg.batch_size));
    }
    const TraceMeta& first = traces.front().meta;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const TraceMeta& m = traces[i].meta;
        if (m.top_k != first.top_k || m.n_steps != first.n_steps) {
            throw std::invalid_argument("simulate: tenant " + std::to_string(i) + " has top_k/n_steps " +
                                        std::to_string(m.top_k) + "/" + std::to_string(m.n_steps) +
                                        ", tenant 0 has " + std::to_string(first.top_k) + "/" +
                                        std::to_string(first.n_steps));
        }
        if (m.n_layers < cfg.layers_per_device) {
            throw std::invalid_argument("simulate: tenant " + std::to_string(i) + " has " +
                                        std::to_string(m.n_layers) + " layers, device needs " +
                                        std::to_string(cfg.layers_per_device));
        }
        if (traces[i].steps.size() != m.n_steps) throw std::invalid_argument("simulate: trace step count mismatch");
    }
}

}  // namespace

SimResult simulate(std::span<const Trace> traces, const CacheConfig& cfg) {
    cfg.validate();
    check_traces(traces, cfg);

    SimResult res;
    res.capacity_tokens = cfg.capacity_tokens();
    LruState lru(res.capacity_tokens);
    const std::uint32_t n_steps = traces.front().meta.n_steps;
    const std::uint32_t page = cfg.page_size_tokens;
    const double ns_per_token = static_cast<double>(cfg.kv_token_bytes) / cfg.hbm_bandwidth * 1e9;
    res.steps.resize(n_steps);

    std::vector<std::uint32_t> missed_page_ids;
    std::vector<CacheKey> fill;
    for (std::uint32_t t = 0; t < n_steps; ++t) {
        StepRecord& rec = res.steps[t];
        for (std::uint32_t tenant = 0; tenant < traces.size(); ++tenant) {
            const Trace& tr = traces[tenant];
            const std::uint64_t context = tr.meta.context_at(t);
            for (std::uint32_t layer = 0; layer < cfg.layers_per_device; ++layer) {
                const TopKSet& sel = tr.selection(t, layer);
                missed_page_ids.clear();
                for (TokenIndex s : sel) {
                    const CacheKey key{tenant, layer, s};
                    if (lru.access(key) == Access::hit) {
                        ++rec.hits;
                        continue;
                    }
                    ++rec.missed_tokens;
                    const std::uint32_t pid = s / page;
                    // Selections are ascending, so page ids of misses arrive sorted.
                    if (missed_page_ids.empty() || missed_page_ids.back() != pid) missed_page_ids.push_back(pid);
                    fill.clear();
                    if (cfg.insert_whole_page) {
                        const std::uint64_t lo = std::uint64_t{pid} * page;
                        const std::uint64_t hi = std::min<std::uint64_t>(lo + page, context);
                        for (std::uint64_t p = lo; p < hi; ++p)
                            if (p != s) fill.push_back({tenant, layer, static_cast<std::uint32_t>(p)});
                    }
                    fill.push_back(key);
                    lru.insert(fill);
                }
                const std::uint64_t pages = missed_page_ids.size();
                const std::uint64_t rounds =
                    std::max<std::uint64_t>(1, (pages + cfg.miss_concurrency - 1) / cfg.miss_concurrency);
                const double transfer = static_cast<double>(sel.size()) * ns_per_token;
                rec.requested += sel.size();
                rec.missed_pages += pages;
                rec.step_time_ns += transfer + static_cast<double>(rounds) * cfg.miss_latency_ns;
                rec.ideal_time_ns += transfer + cfg.miss_latency_ns;
            }
        }
        res.requested += rec.requested;
        res.hits += rec.hits;
        res.missed_tokens += rec.missed_tokens;
        res.missed_pages += rec.missed_pages;
        res.ideal_time_ns += rec.ideal_time_ns;
        res.actual_time_ns += rec.step_time_ns;
    }
    res.slowdown = res.ideal_time_ns > 0.0 ? res.actual_time_ns / res.ideal_time_ns : 1.0;
    return res;
}

std::vector<SweepRow> sweep(std::span<const Trace> traces, const CacheConfig& config,
                            std::span<const std::uint64_t> reserved_bytes) {
    if (reserved_bytes.empty()) throw std::invalid_argument("sweep: empty reserved list");
    config.validate();
    check_traces(traces, config);

    std::vector<SweepRow> rows(reserved_bytes.size());
    auto run_point = [&](std::size_t i) {
        CacheConfig c = config;
        c.reserved_bytes = reserved_bytes[i];
        const SimResult r = simulate(traces, c);
        rows[i] = SweepRow{c.reserved_bytes, r.capacity_tokens, r.slowdown, r.hit_rate(),
                           static_cast<double>(r.missed_pages) / static_cast<double>(r.steps.size())};
    };
    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), rows.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < rows.size(); ++i) run_point(i);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < rows.size(); i += workers) run_point(i);
            });
        }
    }
    return rows;
}

// ---- config + output --------------------------------------------------------

CacheConfig cache_config_from_text(std::string_view text, const std::string& origin) {
    const KeyValueFile kv = KeyValueFile::parse(text, origin);
    kv.reject_unknown({"reserved_bytes", "kv_token_bytes", "page_size_tokens", "miss_latency_ns", "hbm_bandwidth",
                       "layers_per_device", "batch_size", "miss_concurrency", "insert_whole_page"});
    CacheConfig c;
    auto u32 = [&](const char* key, std::uint32_t fallback) {
        const std::uint64_t v = kv.get_u64(key, fallback);
        if (v > 0xffffffffULL) throw ConfigError(origin + ": '" + key + "' does not fit in 32 bits");
        return static_cast<std::uint32_t>(v);
    };
    if (kv.has("reserved_bytes")) {
        const auto list = parse_byte_list(kv.get_string("reserved_bytes", "0"));
        if (list.size() != 1) throw ConfigError(origin + ": reserved_bytes takes a single size");
        c.reserved_bytes = list.front();
    }
    c.kv_token_bytes = kv.get_u64("kv_token_bytes", c.kv_token_bytes);
    c.page_size_tokens = u32("page_size_tokens", c.page_size_tokens);
    c.miss_latency_ns = kv.get_double("miss_latency_ns", c.miss_latency_ns);
    c.hbm_bandwidth = kv.get_double("hbm_bandwidth", c.hbm_bandwidth);
    c.layers_per_device = u32("layers_per_device", c.layers_per_device);
    c.batch_size = u32("batch_size", c.batch_size);
    c.miss_concurrency = u32("miss_concurrency", c.miss_concurrency);
    c.insert_whole_page = kv.get_bool("insert_whole_page", c.insert_whole_page);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return c;
}

CacheConfig load_cache_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::runtime_error& e) {
        throw ConfigReadError(e.what());
    }
    return cache_config_from_text(text, path.string());
}

std::string cache_config_to_text(const CacheConfig& c) {
    std::string out;
    auto line = [&](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
    line("reserved_bytes", std::to_string(c.reserved_bytes));
    line("kv_token_bytes", std::to_string(c.kv_token_bytes));
    line("page_size_tokens", std::to_string(c.page_size_tokens));
    line("miss_latency_ns", format_double(c.miss_latency_ns));
    line("hbm_bandwidth", format_double(c.hbm_bandwidth));
    line("layers_per_device", std::to_string(c.layers_per_device));
    line("batch_size", std::to_string(c.batch_size));
    line("miss_concurrency", std::to_string(c.miss_concurrency));
    line("insert_whole_page", c.insert_whole_page ? "true" : "false");
    return out;
}

std::vector<std::uint64_t> parse_byte_list(std::string_view text) {
    std::vector<std::uint64_t> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string_view::npos) comma = text.size();
        std::string_view item = text.substr(pos, comma - pos);
        pos = comma + 1;
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        if (item.empty()) throw std::invalid_argument("empty entry in size list '" + std::string(text) + "'");

        double value = 0.0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
        if (ec != std::errc{} || !(value >= 0.0)) throw std::invalid_argument("bad size '" + std::string(item) + "'");
        std::string unit(ptr, item.data() + item.size());
        for (auto& ch : unit) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        double scale = 1.0;
        if (unit.empty() || unit == "B") scale = 1.0;
        else if (unit == "KB" || unit == "KIB" || unit == "K") scale = 1024.0;
        else if (unit == "MB" || unit == "MIB" || unit == "M") scale = 1024.0 * 1024.0;
        else if (unit == "GB" || unit == "GIB" || unit == "G") scale = 1024.0 * 1024.0 * 1024.0;
        else throw std::invalid_argument("unknown size unit '" + unit + "'");
        out.push_back(static_cast<std::uint64_t>(std::llround(value * scale)));
    }
    return out;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
    std::string out = "reserved_bytes,slowdown,hit_rate,missed_pages_per_step\n";
    for (const auto& r : rows) {
        out += std::to_string(r.reserved_bytes) + "," + format_double(r.slowdown) + "," + format_double(r.hit_rate) +
               "," + format_double(r.missed_pages_per_step) + "\n";
    }
    return out;
}

namespace {

nlohmann::ordered_json config_json(const CacheConfig& c) {
    nlohmann::ordered_json j;
    j["kv_token_bytes"] = c.kv_token_bytes;
    j["page_size_tokens"] = c.page_size_tokens;
    j["miss_latency_ns"] = c.miss_latency_ns;
    j["hbm_bandwidth"] = c.hbm_bandwidth;
    j["layers_per_device"] = c.layers_per_device;
    j["batch_size"] = c.batch_size;
    j["miss_concurrency"] = c.miss_concurrency;
    j["insert_whole_page"] = c.insert_whole_page;
    return j;
}

}  // namespace

std::string sweep_to_json(std::span<const SweepRow> rows, const CacheConfig& config) {
    nlohmann::ordered_json j;
    j["config"] = config_json(config);
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json row;
        row["reserved_bytes"] = r.reserved_bytes;
        row["capacity_tokens"] = r.capacity_tokens;
        row["slowdown"] = r.slowdown;
        row["hit_rate"] = r.hit_rate;
        row["missed_pages_per_step"] = r.missed_pages_per_step;
        j["rows"].push_back(std::move(row));
    }
    return j.dump(2) + "\n";
}

std::string sim_result_to_json(const SimResult& r, const CacheConfig& config) {
    nlohmann::ordered_json j;
    j["config"] = config_json(config);
    j["reserved_bytes"] = config.reserved_bytes;
    j["capacity_tokens"] = r.capacity_tokens;
    j["requested"] = r.requested;
    j["hits"] = r.hits;
    j["missed_tokens"] = r.missed_tokens;
    j["missed_pages"] = r.missed_pages;
    j["hit_rate"] = r.hit_rate();
    j["ideal_time_ns"] = r.ideal_time_ns;
    j["actual_time_ns"] = r.actual_time_ns;
    j["slowdown"] = r.slowdown;
    return j.dump(2) + "\n";
}

std::string sim_steps_to_csv(const SimResult& r) {
    std::string out = "step,requested,hits,missed_tokens,missed_pages,ideal_time_ns,step_time_ns\n";
    for (std::size_t t = 0; t < r.steps.size(); ++t) {
        const StepRecord& s = r.steps[t];
        out += std::to_string(t) + "," + std::to_string(s.requested) + "," + std::to_string(s.hits) + "," +
               std::to_string(s.missed_tokens) + "," + std::to_string(s.missed_pages) + "," +
               format_double(s.ideal_time_ns) + "," + format_double(s.step_time_ns) + "\n";
    }
    return out;
}

}  // namespace dsakv
