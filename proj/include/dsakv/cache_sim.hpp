#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dsakv/lru.hpp"
#include "dsakv/trace.hpp"

namespace dsakv {

/// Reserved LL-cache region and the HBM fetch cost model around it.
struct CacheConfig {
    std::uint64_t reserved_bytes = 0;
    std::uint64_t kv_token_bytes = 4096;     // one (layer, token) KV entry
    std::uint32_t page_size_tokens = 16;
    double miss_latency_ns = 200.0;
    double hbm_bandwidth = 3.35e12;          // bytes/s
    std::uint32_t layers_per_device = 20;
    std::uint32_t batch_size = 8;            // tenants sharing the device
    std::uint32_t miss_concurrency = 1;      // page fetches overlapped per layer-step
    bool insert_whole_page = false;

    std::uint64_t capacity_tokens() const { return kv_token_bytes ? reserved_bytes / kv_token_bytes : 0; }

    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;
};

struct StepRecord {
    std::uint64_t requested = 0;
    std::uint64_t hits = 0;
    std::uint64_t missed_tokens = 0;
    std::uint64_t missed_pages = 0;
    double ideal_time_ns = 0.0;
    double step_time_ns = 0.0;

    bool operator==(const StepRecord&) const = default;
};

struct SimResult {
    std::vector<StepRecord> steps;
    std::uint64_t capacity_tokens = 0;
    std::uint64_t requested = 0;
    std::uint64_t hits = 0;
    std::uint64_t missed_tokens = 0;
    std::uint64_t missed_pages = 0;
    double ideal_time_ns = 0.0;
    double actual_time_ns = 0.0;
    double slowdown = 0.0;

    double hit_rate() const { return requested ? static_cast<double>(hits) / static_cast<double>(requested) : 0.0; }

    bool operator==(const SimResult&) const = default;
};

/// Replays one trace per tenant through a single shared LRU region.
///
/// Each (step, tenant, layer) requests its selection in ascending token order. A miss is
/// filled right away (the token, or its whole page with `insert_whole_page`), and the
/// layer-step pays ceil(missed_pages / miss_concurrency) miss latencies, but never less
/// than the single read the ideal baseline pays. Throws std::invalid_argument on
/// incompatible traces or a bad config.
SimResult simulate(std::span<const Trace> traces, const CacheConfig& config);

struct SweepRow {
    std::uint64_t reserved_bytes = 0;
    std::uint64_t capacity_tokens = 0;
    double slowdown = 0.0;
    double hit_rate = 0.0;
    double missed_pages_per_step = 0.0;

    bool operator==(const SweepRow&) const = default;
};

/// One simulate() per reserved size; rows come back in input order.
std::vector<SweepRow> sweep(std::span<const Trace> traces, const CacheConfig& config,
                            std::span<const std::uint64_t> reserved_bytes);

/// key=value config (same field names as CacheConfig).
CacheConfig cache_config_from_text(std::string_view text, const std::string& origin = "<string>");
CacheConfig load_cache_config(const std::filesystem::path& path);
std::string cache_config_to_text(const CacheConfig& config);

/// "0,5MB,512KB,1024" -> bytes. KB/MB/GB are binary (1024-based); bare numbers are bytes.
std::vector<std::uint64_t> parse_byte_list(std::string_view text);

std::string sweep_to_csv(std::span<const SweepRow> rows);
std::string sweep_to_json(std::span<const SweepRow> rows, const CacheConfig& config);
std::string sim_result_to_json(const SimResult& result, const CacheConfig& config);
std::string sim_steps_to_csv(const SimResult& result);

}  // namespace dsakv
