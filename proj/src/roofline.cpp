#include "dsakv/roofline.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dsakv/atomic_file.hpp"
#include "dsakv/keyvalue.hpp"
#include "json.hpp"

namespace dsakv {

namespace {

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be > 0");
}

void require_non_negative(double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be >= 0");
}

}  // namespace

void GpuSpec::validate() const {
    require_positive(hbm_bandwidth, "hbm_bandwidth");
    require_positive(peak_compute, "peak_compute");
    require_positive(ll_cache_bytes, "ll_cache_bytes");
}

void DecodeWorkload::validate() const {
    require_positive(tokens_per_second_per_user, "tokens_per_second_per_user");
    require_positive(batch_size, "batch_size");
    require_positive(context_tokens, "context_tokens");
    require_non_negative(bytes_read_per_token, "bytes_read_per_token");
    require_non_negative(flops_per_token, "flops_per_token");
}

Utilization utilization(const DecodeWorkload& w, const GpuSpec& gpu) {
    w.validate();
    gpu.validate();
    const double tokens_per_second = w.tokens_per_second_per_user * w.batch_size;
    return {tokens_per_second * w.bytes_read_per_token / gpu.hbm_bandwidth,
            tokens_per_second * w.flops_per_token / gpu.peak_compute};
}

DevicePlan min_devices(const DecodeWorkload& w, const GpuSpec& gpu, double cap, std::uint64_t max_devices) {
    if (!(cap > 0.0 && cap <= 1.0)) throw std::invalid_argument("utilization cap must be in (0, 1]");
    const Utilization total = utilization(w, gpu);
    DevicePlan plan;
    plan.bound = total.bandwidth >= total.compute ? "bandwidth" : "compute";
    const double worst = std::max(total.bandwidth, total.compute);
    const double guess = std::ceil(worst / cap);
    if (!std::isfinite(guess) || guess > static_cast<double>(max_devices)) return plan;

    std::uint64_t n = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(guess));
    auto fits = [&](std::uint64_t d) { return worst / static_cast<double>(d) <= cap; };
    while (n > 1 && fits(n - 1)) --n;
    while (!fits(n)) {
        if (n == max_devices) return plan;
        ++n;
    }
    plan.devices = n;
    plan.per_device = {total.bandwidth / static_cast<double>(n), total.compute / static_cast<double>(n)};
    return plan;
}

RooflineAssumptions roofline_from_text(std::string_view text, const std::string& origin) {
    const KeyValueFile kv = KeyValueFile::parse(text, origin);
    kv.reject_unknown({"name", "tokens_per_second_per_user", "batch_size", "context_tokens", "bytes_read_per_token",
                       "weight_bytes", "kv_bytes_per_context_token", "flops_per_token", "active_params",
                       "hbm_bandwidth", "peak_compute", "ll_cache_bytes", "utilization_cap"});
    RooflineAssumptions a;
    a.name = kv.get_string("name", "unnamed");
    DecodeWorkload& w = a.workload;
    w.tokens_per_second_per_user = kv.get_double("tokens_per_second_per_user", w.tokens_per_second_per_user);
    w.batch_size = kv.get_double("batch_size", w.batch_size);
    w.context_tokens = kv.get_double("context_tokens", w.context_tokens);

    const bool direct_bytes = kv.has("bytes_read_per_token");
    const bool derived_bytes = kv.has("weight_bytes") || kv.has("kv_bytes_per_context_token");
    if (direct_bytes == derived_bytes) {
        throw ConfigError(origin + ": give either bytes_read_per_token or weight_bytes/kv_bytes_per_context_token");
    }
    if (direct_bytes) {
        w.bytes_read_per_token = kv.get_double("bytes_read_per_token", 0.0);
    } else {
        w.bytes_read_per_token = kv.get_double("weight_bytes", 0.0) / w.batch_size +
                                 kv.get_double("kv_bytes_per_context_token", 0.0) * w.context_tokens;
    }
    if (kv.has("flops_per_token") && kv.has("active_params")) {
        throw ConfigError(origin + ": give either flops_per_token or active_params");
    }
    w.flops_per_token = kv.has("active_params") ? 2.0 * kv.get_double("active_params", 0.0)
                                                : kv.get_double("flops_per_token", 0.0);

    a.gpu.hbm_bandwidth = kv.get_double("hbm_bandwidth", a.gpu.hbm_bandwidth);
    a.gpu.peak_compute = kv.get_double("peak_compute", a.gpu.peak_compute);
    a.gpu.ll_cache_bytes = kv.get_double("ll_cache_bytes", a.gpu.ll_cache_bytes);
    a.utilization_cap = kv.get_double("utilization_cap", a.utilization_cap);
    try {
        w.validate();
        a.gpu.validate();
        if (!(a.utilization_cap > 0.0 && a.utilization_cap <= 1.0)) {
            throw std::invalid_argument("utilization_cap must be in (0, 1]");
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return a;
}

RooflineAssumptions load_roofline(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::runtime_error& e) {
        throw ConfigReadError(e.what());
    }
    return roofline_from_text(text, path.string());
}

RooflineRow evaluate(const RooflineAssumptions& a) {
    return {a.name, utilization(a.workload, a.gpu), min_devices(a.workload, a.gpu, a.utilization_cap)};
}

std::string roofline_to_json(std::span<const RooflineRow> rows) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json row;
        row["name"] = r.name;
        row["n_devices"] = r.plan.devices ? nlohmann::ordered_json(*r.plan.devices) : nlohmann::ordered_json();
        row["bw_utilization"] = r.plan.per_device.bandwidth;
        row["compute_utilization"] = r.plan.per_device.compute;
        row["bound"] = r.plan.bound;
        row["single_device_bw_utilization"] = r.single_device.bandwidth;
        row["single_device_compute_utilization"] = r.single_device.compute;
        j.push_back(std::move(row));
    }
    return j.dump(2) + "\n";
}

std::string roofline_to_csv(std::span<const RooflineRow> rows) {
    std::string out =
        "name,n_devices,bw_utilization,compute_utilization,bound,single_device_bw_utilization,"
        "single_device_compute_utilization\n";
    for (const auto& r : rows) {
        out += r.name + "," + (r.plan.devices ? std::to_string(*r.plan.devices) : std::string("unreachable")) + "," +
               format_double(r.plan.per_device.bandwidth) + "," + format_double(r.plan.per_device.compute) + "," +
               r.plan.bound + "," + format_double(r.single_device.bandwidth) + "," +
               format_double(r.single_device.compute) + "\n";
    }
    return out;
}

std::string format_slowdown_table(std::span<const SweepRow> rows) {
    auto size_label = [](std::uint64_t bytes) {
        constexpr double mb = 1024.0 * 1024.0;
        char buf[32];
        if (bytes == 0) return std::string("0");
        if (bytes % (1024 * 1024) == 0) std::snprintf(buf, sizeof buf, "%lluMB", static_cast<unsigned long long>(bytes / (1024 * 1024)));
        else std::snprintf(buf, sizeof buf, "%.2fMB", static_cast<double>(bytes) / mb);
        return std::string(buf);
    };
    std::string top = "LL reserved";
    std::string bottom = "Slowdown   ";
    for (const auto& r : rows) {
        char cell[32];
        std::snprintf(cell, sizeof cell, "%.2f", r.slowdown);
        std::string label = size_label(r.reserved_bytes);
        const std::size_t width = std::max<std::size_t>(label.size(), std::string(cell).size()) + 2;
        top += std::string(width - label.size(), ' ') + label;
        bottom += std::string(width - std::string(cell).size(), ' ') + cell;
    }
    return top + "\n" + bottom + "\n";
}

}  // namespace dsakv
