#include "dsakv/report_io.hpp"

#include <algorithm>
#include <cstdio>

#include "dsakv/keyvalue.hpp"
#include "json.hpp"

namespace dsakv {

using nlohmann::ordered_json;

namespace {

ordered_json stats_json(const std::optional<SummaryStats>& s) {
    if (!s) return nullptr;
    ordered_json j;
    j["count"] = s->count;
    j["mean"] = s->mean;
    j["p95"] = s->p95;
    j["std"] = s->std;
    j["min"] = s->min;
    j["max"] = s->max;
    return j;
}

std::string cell(const std::optional<SummaryStats>& s, double SummaryStats::*field) {
    return s ? format_double((*s).*field) : std::string();
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
    ordered_json j;
    j["n_traces"] = r.n_traces;
    j["n_layers"] = r.n_layers;
    j["top_k"] = r.top_k;
    j["short_traces"] = r.short_traces;

    ordered_json cfg;
    cfg["window_N"] = r.config.window_N;
    cfg["window_stride"] = r.config.window_stride;
    cfg["page_size_tokens"] = r.config.page_size_tokens;
    cfg["histogram_bin_width"] = r.config.histogram_bin_width;
    cfg["persistence_bin_width"] = r.config.persistence_bin_width;
    cfg["page_bin_width"] = r.config.page_bin_width;
    cfg["hot_max"] = r.config.tiers.hot_max;
    cfg["warm_max"] = r.config.tiers.warm_max;
    j["config"] = cfg;

    j["metrics"] = ordered_json::object();
    for (const auto& m : r.metrics) {
        ordered_json e;
        e["unit"] = metric_unit(m.metric);
        e["summary"] = stats_json(m.stats);
        e["histogram"] = {{"bin_width", m.histogram.bin_width}, {"counts", m.histogram.counts}};
        j["metrics"][metric_name(m.metric)] = std::move(e);
    }

    j["per_layer"] = ordered_json::array();
    for (const auto& l : r.per_layer) {
        ordered_json e;
        e["layer"] = l.layer;
        e["working_set"] = stats_json(l.working_set);
        e["lookback"] = stats_json(l.lookback);
        e["new_lookups"] = stats_json(l.new_lookups);
        e["inter_layer"] = stats_json(l.inter_layer);
        j["per_layer"].push_back(std::move(e));
    }

    j["tiers"] = {{"hot", r.tiers.hot_mass}, {"warm", r.tiers.warm_mass}, {"cold", r.tiers.cold_mass}};
    return j.dump(2) + "\n";
}

std::string report_summary_csv(const MetricsReport& r) {
    std::string out = "metric,unit,count,mean,p95,std,min,max\n";
    for (const auto& m : r.metrics) {
        out += std::string(metric_name(m.metric)) + "," + metric_unit(m.metric) + ",";
        out += m.stats ? std::to_string(m.stats->count) : std::string("0");
        for (auto field : {&SummaryStats::mean, &SummaryStats::p95, &SummaryStats::std, &SummaryStats::min,
                           &SummaryStats::max})
            out += "," + cell(m.stats, field);
        out += "\n";
    }
    return out;
}

std::string report_layers_csv(const MetricsReport& r) {
    std::string out =
        "layer,working_set_mean,working_set_p95,lookback_mean,lookback_p95,new_lookups_mean,new_lookups_p95,"
        "inter_layer_mean,inter_layer_p95\n";
    for (const auto& l : r.per_layer) {
        out += std::to_string(l.layer);
        for (const auto* s : {&l.working_set, &l.lookback, &l.new_lookups, &l.inter_layer})
            out += "," + cell(*s, &SummaryStats::mean) + "," + cell(*s, &SummaryStats::p95);
        out += "\n";
    }
    return out;
}

std::string histogram_svg(const MetricSummary& m) {
    constexpr double W = 640, H = 360, left = 56, right = 16, top = 32, bottom = 48;
    const auto& counts = m.histogram.counts;
    const std::uint64_t peak = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
    const double total = static_cast<double>(std::max<std::uint64_t>(1, m.histogram.total()));
    const double plot_w = W - left - right, plot_h = H - top - bottom;
    const double bar_w = counts.empty() ? 0 : plot_w / static_cast<double>(counts.size());

    std::string s;
    char buf[256];
    auto add = [&](const char* fmt, auto... args) {
        std::snprintf(buf, sizeof buf, fmt, args...);
        s += buf;
    };
    add("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" viewBox=\"0 0 %g %g\">\n", W, H, W, H);
    add("<rect width=\"%g\" height=\"%g\" fill=\"white\"/>\n", W, H);
    add("<text x=\"%g\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">%s (%s)</text>\n", left,
        metric_name(m.metric), metric_unit(m.metric));
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0) continue;
        const double h = plot_h * static_cast<double>(counts[i]) / static_cast<double>(peak);
        add("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#4a7ab5\">"
            "<title>[%g, %g): %.4f</title></rect>\n",
            left + bar_w * static_cast<double>(i), top + plot_h - h, std::max(bar_w - 1.0, 0.5), h,
            m.histogram.lower_edge(i), m.histogram.lower_edge(i + 1), static_cast<double>(counts[i]) / total);
    }
    add("<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", left, top + plot_h, left + plot_w,
        top + plot_h);
    add("<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", left, top, left, top + plot_h);
    const std::size_t ticks = std::min<std::size_t>(counts.size(), 8);
    for (std::size_t t = 0; t <= ticks && !counts.empty(); ++t) {
        const std::size_t bin = counts.size() * t / std::max<std::size_t>(ticks, 1);
        add("<text x=\"%.2f\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">%g</text>\n",
            left + bar_w * static_cast<double>(bin), top + plot_h + 16, m.histogram.lower_edge(bin));
    }
    add("<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">%.3f</text>\n",
        left - 4, top + 4, static_cast<double>(peak) / total);
    add("<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">0</text>\n", left - 4,
        top + plot_h);
    s += "</svg>\n";
    return s;
}

}  // namespace dsakv
