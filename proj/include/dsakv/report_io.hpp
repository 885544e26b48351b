#pragma once

#include <string>

#include "dsakv/metrics.hpp"

namespace dsakv {

/// JSON document: corpus header, analysis config, one object per metric (summary + histogram),
/// per-layer breakdown, tier masses.
std::string report_to_json(const MetricsReport& report);

/// One row per metric: metric,unit,count,mean,p95,std,min,max.
std::string report_summary_csv(const MetricsReport& report);

/// One row per layer with mean/p95 for each per-layer metric. Empty cells where undefined.
std::string report_layers_csv(const MetricsReport& report);

/// Standalone SVG bar chart of one metric's histogram.
std::string histogram_svg(const MetricSummary& summary);

}  // namespace dsakv
