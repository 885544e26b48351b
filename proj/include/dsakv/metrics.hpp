#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsakv/trace.hpp"

namespace dsakv {

struct TierThresholds {
    double hot_max = 1.0;   // lookback, fraction of top_k
    double warm_max = 4.0;

    bool operator==(const TierThresholds&) const = default;
};

struct AnalysisConfig {
    std::uint32_t window_N = 50;
    std::uint32_t window_stride = 1;      // window_N gives disjoint chunks
    std::uint32_t page_size_tokens = 0;   // 0: take it from each trace's metadata
    double histogram_bin_width = 0.25;    // for metrics measured in fractions of top_k
    double persistence_bin_width = 1.0;   // steps
    double page_bin_width = 0.05;
    TierThresholds tiers;

    void validate() const;
    bool operator==(const AnalysisConfig&) const = default;
};

struct SummaryStats {
    double mean = 0.0;
    double p95 = 0.0;   // nearest rank
    double std = 0.0;   // population
    double min = 0.0;
    double max = 0.0;
    std::uint64_t count = 0;

    bool operator==(const SummaryStats&) const = default;
};

/// Uniform bins starting at 0: bin i covers [i*width, (i+1)*width).
struct Histogram {
    double bin_width = 1.0;
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const;
    double lower_edge(std::size_t i) const { return static_cast<double>(i) * bin_width; }

    bool operator==(const Histogram&) const = default;
};

struct TierReport {
    TierThresholds thresholds;
    double hot_mass = 0.0;   // lookback < hot_max
    double warm_mass = 0.0;  // hot_max <= lookback < warm_max
    double cold_mass = 0.0;

    bool operator==(const TierReport&) const = default;
};

// Raw sample streams. Fractions are relative to the trace's top_k.

/// Distinct indices over each window of `window_N` consecutive steps. Empty when the
/// trace has fewer than `window_N` steps.
std::vector<double> working_set_samples(const Trace& trace, std::uint32_t layer, std::uint32_t window_N,
                                        std::uint32_t stride = 1);
/// Length of every maximal run of consecutive steps an index stays selected (in steps).
std::vector<double> persistence_samples(const Trace& trace, std::uint32_t layer);
/// ((prefill_len + t) - s) / top_k for every selected s at every step.
std::vector<double> lookback_samples(const Trace& trace, std::uint32_t layer);
/// |sel_t \ sel_{t-1}| / top_k for t >= 1.
std::vector<double> new_lookup_samples(const Trace& trace, std::uint32_t layer);
/// |sel_{t,l} & sel_{t,l-1}| / top_k over every step and every layer l >= 1.
std::vector<double> inter_layer_samples(const Trace& trace);
/// Same, restricted to one layer (>= 1) against its predecessor.
std::vector<double> inter_layer_samples(const Trace& trace, std::uint32_t layer);
/// Per-step mean utilization of the pages touched by the selection.
std::vector<double> page_utilization_samples(const Trace& trace, std::uint32_t layer, std::uint32_t page_size_tokens);

/// Throws std::invalid_argument on empty input.
SummaryStats summarize(std::span<const double> samples);
SummaryStats summarize_sorted(std::span<const double> sorted);

/// Samples must be non-negative. Throws on bin_width <= 0.
Histogram make_histogram(std::span<const double> samples, double bin_width);

/// Mass split of a lookback histogram. Bins straddling a threshold are split linearly.
TierReport tier_label(const Histogram& lookback, const TierThresholds& thresholds);

enum class Metric { working_set, persistence, lookback, new_lookups, inter_layer, page_utilization };
inline constexpr Metric kAllMetrics[] = {Metric::working_set, Metric::lookback,    Metric::new_lookups,
                                         Metric::inter_layer, Metric::persistence, Metric::page_utilization};
const char* metric_name(Metric m);
const char* metric_unit(Metric m);

struct MetricSummary {
    Metric metric;
    std::optional<SummaryStats> stats;   // empty when the corpus yields no samples
    Histogram histogram;

    bool operator==(const MetricSummary&) const = default;
};

struct LayerBreakdown {
    std::uint32_t layer = 0;
    std::optional<SummaryStats> working_set;
    std::optional<SummaryStats> lookback;
    std::optional<SummaryStats> new_lookups;
    std::optional<SummaryStats> inter_layer;   // never set for layer 0

    bool operator==(const LayerBreakdown&) const = default;
};

struct MetricsReport {
    std::uint32_t n_traces = 0;
    std::uint32_t n_layers = 0;
    std::uint32_t top_k = 0;
    AnalysisConfig config;
    std::uint32_t short_traces = 0;   // traces with fewer steps than window_N
    std::vector<MetricSummary> metrics;
    std::vector<LayerBreakdown> per_layer;
    TierReport tiers;

    const MetricSummary& get(Metric m) const;
    bool operator==(const MetricsReport&) const = default;
};

/// Pools every (trace, layer) sample stream. Throws std::invalid_argument on an empty
/// corpus or on traces that disagree on top_k or n_layers.
MetricsReport build_report(std::span<const Trace> traces, const AnalysisConfig& config);

}  // namespace dsakv
