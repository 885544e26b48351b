#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsakv/cache_sim.hpp"

namespace dsakv {

struct GpuSpec {
    double hbm_bandwidth = 3.35e12;   // bytes/s
    double peak_compute = 989e12;     // flops/s
    double ll_cache_bytes = 50.0 * 1024 * 1024;

    void validate() const;
    bool operator==(const GpuSpec&) const = default;
};

/// Whole-model decode demand. Bytes and flops are per generated token.
struct DecodeWorkload {
    double tokens_per_second_per_user = 100.0;
    double batch_size = 8.0;
    double context_tokens = 65536.0;
    double bytes_read_per_token = 0.0;
    double flops_per_token = 0.0;

    void validate() const;
    bool operator==(const DecodeWorkload&) const = default;
};

struct Utilization {
    double bandwidth = 0.0;   // may exceed 1.0 (infeasible on one device)
    double compute = 0.0;

    bool operator==(const Utilization&) const = default;
};

Utilization utilization(const DecodeWorkload& workload, const GpuSpec& gpu);

struct DevicePlan {
    std::optional<std::uint64_t> devices;   // empty when the cap is out of reach
    Utilization per_device;                 // at `devices`, ideal even sharding
    std::string bound;                      // "bandwidth" or "compute"
};

/// Smallest N with both per-device utilizations <= cap. Cap must be in (0, 1].
DevicePlan min_devices(const DecodeWorkload& workload, const GpuSpec& gpu, double cap,
                       std::uint64_t max_devices = 1'000'000);

/// Assumption file: key=value. Bytes per token come either from `bytes_read_per_token`
/// or from `weight_bytes / batch_size + kv_bytes_per_context_token * context_tokens`;
/// flops from `flops_per_token` or `2 * active_params`.
struct RooflineAssumptions {
    std::string name;
    DecodeWorkload workload;
    GpuSpec gpu;
    double utilization_cap = 1.0;
};

RooflineAssumptions roofline_from_text(std::string_view text, const std::string& origin = "<string>");
RooflineAssumptions load_roofline(const std::filesystem::path& path);

struct RooflineRow {
    std::string name;
    Utilization single_device;
    DevicePlan plan;
};

RooflineRow evaluate(const RooflineAssumptions& assumptions);

std::string roofline_to_json(std::span<const RooflineRow> rows);
std::string roofline_to_csv(std::span<const RooflineRow> rows);

/// Two-row text table: reserved sizes and slowdowns.
std::string format_slowdown_table(std::span<const SweepRow> rows);

}  // namespace dsakv
