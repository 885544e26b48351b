#include "dsakv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <stdexcept>

namespace dsakv {

void AnalysisConfig::validate() const {
    if (window_N == 0) throw std::invalid_argument("window_N must be >= 1");
    if (window_stride == 0) throw std::invalid_argument("window_stride must be >= 1");
    if (!(histogram_bin_width > 0.0) || !(persistence_bin_width > 0.0) || !(page_bin_width > 0.0)) {
        throw std::invalid_argument("histogram bin widths must be > 0");
    }
    if (!(tiers.hot_max < tiers.warm_max)) throw std::invalid_argument("tier thresholds need hot_max < warm_max");
}

namespace {

void check_layer(const Trace& tr, std::uint32_t layer) {
    if (layer >= tr.meta.n_layers) {
        throw std::out_of_range("layer " + std::to_string(layer) + " >= n_layers " + std::to_string(tr.meta.n_layers));
    }
}

std::size_t difference_size(const TopKSet& a, const TopKSet& b) {
    std::size_t n = 0;
    auto ib = b.begin();
    for (TokenIndex s : a) {
        while (ib != b.end() && *ib < s) ++ib;
        if (ib == b.end() || *ib != s) ++n;
    }
    return n;
}

std::size_t intersection_size(const TopKSet& a, const TopKSet& b) { return a.size() - difference_size(a, b); }

std::size_t max_context(const Trace& tr) { return std::size_t{tr.meta.prefill_len} + tr.meta.n_steps; }

}  // namespace

std::vector<double> working_set_samples(const Trace& tr, std::uint32_t layer, std::uint32_t window_N,
                                        std::uint32_t stride) {
    check_layer(tr, layer);
    if (window_N == 0 || stride == 0) throw std::invalid_argument("window_N and stride must be >= 1");
    const std::size_t n = tr.steps.size();
    std::vector<double> out;
    if (n < window_N) return out;

    const double k = tr.meta.top_k;
    std::vector<std::uint32_t> refs(max_context(tr), 0);
    std::size_t distinct = 0;
    auto add = [&](std::size_t t) {
        for (TokenIndex s : tr.selection(static_cast<std::uint32_t>(t), layer))
            if (refs[s]++ == 0) ++distinct;
    };
    auto remove = [&](std::size_t t) {
        for (TokenIndex s : tr.selection(static_cast<std::uint32_t>(t), layer))
            if (--refs[s] == 0) --distinct;
    };

    for (std::size_t t = 0; t < window_N; ++t) add(t);
    for (std::size_t m = 0;; ++m) {
        if (m % stride == 0) out.push_back(static_cast<double>(distinct) / k);
        if (m + window_N >= n) break;
        remove(m);
        add(m + window_N);
    }
    return out;
}

std::vector<double> persistence_samples(const Trace& tr, std::uint32_t layer) {
    check_layer(tr, layer);
    std::vector<double> out;
    std::vector<std::uint32_t> run(max_context(tr), 0);
    const TopKSet* prev = nullptr;
    for (const DecodeStep& st : tr.steps) {
        const TopKSet& cur = st.per_layer[layer];
        if (prev) {
            // Runs of indices that dropped out end here.
            auto ic = cur.begin();
            for (TokenIndex s : *prev) {
                while (ic != cur.end() && *ic < s) ++ic;
                if (ic == cur.end() || *ic != s) {
                    out.push_back(run[s]);
                    run[s] = 0;
                }
            }
        }
        for (TokenIndex s : cur) ++run[s];
        prev = &cur;
    }
    if (prev)
        for (TokenIndex s : *prev) out.push_back(run[s]);
    return out;
}

std::vector<double> lookback_samples(const Trace& tr, std::uint32_t layer) {
    check_layer(tr, layer);
    const double k = tr.meta.top_k;
    std::vector<double> out;
    out.reserve(tr.steps.size() * tr.meta.top_k);
    for (const DecodeStep& st : tr.steps) {
        const std::uint64_t context = tr.meta.context_at(st.t);
        for (TokenIndex s : st.per_layer[layer]) out.push_back(static_cast<double>(context - s) / k);
    }
    return out;
}

std::vector<double> new_lookup_samples(const Trace& tr, std::uint32_t layer) {
    check_layer(tr, layer);
    const double k = tr.meta.top_k;
    std::vector<double> out;
    for (std::size_t t = 1; t < tr.steps.size(); ++t) {
        out.push_back(static_cast<double>(difference_size(tr.steps[t].per_layer[layer], tr.steps[t - 1].per_layer[layer])) / k);
    }
    return out;
}

std::vector<double> inter_layer_samples(const Trace& tr, std::uint32_t layer) {
    check_layer(tr, layer);
    if (layer == 0) throw std::invalid_argument("inter-layer overlap needs a predecessor layer");
    const double k = tr.meta.top_k;
    std::vector<double> out;
    out.reserve(tr.steps.size());
    for (const DecodeStep& st : tr.steps) {
        out.push_back(static_cast<double>(intersection_size(st.per_layer[layer], st.per_layer[layer - 1])) / k);
    }
    return out;
}

std::vector<double> inter_layer_samples(const Trace& tr) {
    const double k = tr.meta.top_k;
    std::vector<double> out;
    for (const DecodeStep& st : tr.steps)
        for (std::size_t l = 1; l < st.per_layer.size(); ++l)
            out.push_back(static_cast<double>(intersection_size(st.per_layer[l], st.per_layer[l - 1])) / k);
    return out;
}

std::vector<double> page_utilization_samples(const Trace& tr, std::uint32_t layer, std::uint32_t page_size) {
    check_layer(tr, layer);
    if (page_size == 0) throw std::invalid_argument("page_size_tokens must be >= 1");
    std::vector<double> out;
    out.reserve(tr.steps.size());
    for (const DecodeStep& st : tr.steps) {
        const TopKSet& sel = st.per_layer[layer];
        if (sel.empty()) continue;
        const std::uint64_t context = tr.meta.context_at(st.t);
        double sum = 0.0;
        std::size_t pages = 0;
        for (std::size_t i = 0; i < sel.size();) {
            const std::uint64_t page = sel[i] / page_size;
            std::size_t j = i;
            while (j < sel.size() && sel[j] / page_size == page) ++j;
            const std::uint64_t existing = std::min<std::uint64_t>(page_size, context - page * page_size);
            sum += static_cast<double>(j - i) / static_cast<double>(existing);
            ++pages;
            i = j;
        }
        out.push_back(sum / static_cast<double>(pages));
    }
    return out;
}

SummaryStats summarize_sorted(std::span<const double> sorted) {
    if (sorted.empty()) throw std::invalid_argument("summarize: no samples");
    const std::size_t n = sorted.size();
    double sum = 0.0;
    for (double v : sorted) sum += v;
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (double v : sorted) sq += (v - mean) * (v - mean);
    const std::size_t rank = (95 * n + 99) / 100;  // ceil(0.95 n), 1-based
    SummaryStats s;
    s.mean = mean;
    s.std = std::sqrt(sq / static_cast<double>(n));
    s.p95 = sorted[std::max<std::size_t>(rank, 1) - 1];
    s.min = sorted.front();
    s.max = sorted.back();
    s.count = n;
    return s;
}

SummaryStats summarize(std::span<const double> samples) {
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    return summarize_sorted(sorted);
}

std::uint64_t Histogram::total() const {
    std::uint64_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

Histogram make_histogram(std::span<const double> samples, double bin_width) {
    if (!(bin_width > 0.0)) throw std::invalid_argument("bin_width must be > 0");
    Histogram h;
    h.bin_width = bin_width;
    for (double v : samples) {
        if (!(v >= 0.0)) throw std::invalid_argument("histogram samples must be non-negative");
        const auto bin = static_cast<std::size_t>(std::floor(v / bin_width));
        if (bin >= h.counts.size()) h.counts.resize(bin + 1, 0);
        ++h.counts[bin];
    }
    return h;
}

TierReport tier_label(const Histogram& h, const TierThresholds& th) {
    if (!(th.hot_max < th.warm_max)) throw std::invalid_argument("tier thresholds need hot_max < warm_max");
    const std::uint64_t total = h.total();
    if (total == 0) throw std::invalid_argument("tier_label: empty histogram");
    // Mass strictly below x, treating each bin as uniform.
    auto below = [&](double x) {
        double mass = 0.0;
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
            const double lo = h.lower_edge(i);
            const double hi = lo + h.bin_width;
            if (hi <= x) {
                mass += static_cast<double>(h.counts[i]);
            } else if (lo < x) {
                mass += static_cast<double>(h.counts[i]) * (x - lo) / h.bin_width;
            }
        }
        return mass / static_cast<double>(total);
    };
    TierReport r;
    r.thresholds = th;
    const double hot = below(th.hot_max);
    const double warm_or_hot = below(th.warm_max);
    r.hot_mass = hot;
    r.warm_mass = warm_or_hot - hot;
    r.cold_mass = 1.0 - warm_or_hot;
    return r;
}

const char* metric_name(Metric m) {
    switch (m) {
    case Metric::working_set: return "working_set";
    case Metric::persistence: return "persistence";
    case Metric::lookback: return "lookback";
    case Metric::new_lookups: return "new_lookups";
    case Metric::inter_layer: return "inter_layer";
    case Metric::page_utilization: return "page_utilization";
    }
    return "unknown";
}

const char* metric_unit(Metric m) {
    switch (m) {
    case Metric::persistence: return "steps";
    case Metric::page_utilization: return "fraction of page";
    default: return "top-k";
    }
}

const MetricSummary& MetricsReport::get(Metric m) const {
    for (const auto& s : metrics)
        if (s.metric == m) return s;
    throw std::out_of_range(std::string("metric not in report: ") + metric_name(m));
}

namespace {

std::optional<SummaryStats> maybe_summary(std::vector<double>& pool) {
    if (pool.empty()) return std::nullopt;
    std::sort(pool.begin(), pool.end());
    return summarize_sorted(pool);
}

void append(std::vector<double>& dst, const std::vector<double>& src) { dst.insert(dst.end(), src.begin(), src.end()); }

}  // namespace

MetricsReport build_report(std::span<const Trace> traces, const AnalysisConfig& config) {
    config.validate();
    if (traces.empty()) throw std::invalid_argument("build_report: no traces");
    const TraceMeta& first = traces.front().meta;
    for (std::size_t i = 1; i < traces.size(); ++i) {
        const TraceMeta& m = traces[i].meta;
        if (m.top_k != first.top_k) {
            throw std::invalid_argument("mixed top_k: trace 0 has " + std::to_string(first.top_k) + ", trace " +
                                        std::to_string(i) + " has " + std::to_string(m.top_k));
        }
        if (m.n_layers != first.n_layers) {
            throw std::invalid_argument("mixed n_layers: trace 0 has " + std::to_string(first.n_layers) + ", trace " +
                                        std::to_string(i) + " has " + std::to_string(m.n_layers));
        }
    }
    const std::uint32_t n_layers = first.n_layers;

    MetricsReport rep;
    rep.n_traces = static_cast<std::uint32_t>(traces.size());
    rep.n_layers = n_layers;
    rep.top_k = first.top_k;
    rep.config = config;

    // Per-layer pools are sorted, then merged into the global pool, so every statistic is
    // computed over a sorted sequence and is independent of trace order.
    enum { WS, LB, NL, IL, N_LAYERED };
    std::vector<double> global[N_LAYERED];
    std::vector<double> persistence;
    std::vector<double> pages;
    for (const Trace& tr : traces)
        if (tr.steps.size() < config.window_N) ++rep.short_traces;

    for (std::uint32_t l = 0; l < n_layers; ++l) {
        std::vector<double> pool[N_LAYERED];
        for (const Trace& tr : traces) {
            append(pool[WS], working_set_samples(tr, l, config.window_N, config.window_stride));
            append(pool[LB], lookback_samples(tr, l));
            append(pool[NL], new_lookup_samples(tr, l));
            if (l > 0) append(pool[IL], inter_layer_samples(tr, l));
            append(persistence, persistence_samples(tr, l));
            const std::uint32_t page = config.page_size_tokens ? config.page_size_tokens : tr.meta.page_size_tokens;
            append(pages, page_utilization_samples(tr, l, page));
        }
        LayerBreakdown lb;
        lb.layer = l;
        lb.working_set = maybe_summary(pool[WS]);
        lb.lookback = maybe_summary(pool[LB]);
        lb.new_lookups = maybe_summary(pool[NL]);
        lb.inter_layer = maybe_summary(pool[IL]);
        rep.per_layer.push_back(std::move(lb));
        for (int m = 0; m < N_LAYERED; ++m) {
            std::vector<double> merged;
            merged.reserve(global[m].size() + pool[m].size());
            std::merge(global[m].begin(), global[m].end(), pool[m].begin(), pool[m].end(), std::back_inserter(merged));
            global[m] = std::move(merged);
        }
    }

    auto add_metric = [&](Metric metric, std::vector<double>& sorted_pool, double bin_width) {
        MetricSummary s;
        s.metric = metric;
        if (!sorted_pool.empty()) s.stats = summarize_sorted(sorted_pool);
        s.histogram = make_histogram(sorted_pool, bin_width);
        rep.metrics.push_back(std::move(s));
    };
    std::sort(persistence.begin(), persistence.end());
    std::sort(pages.begin(), pages.end());
    add_metric(Metric::working_set, global[WS], config.histogram_bin_width);
    add_metric(Metric::lookback, global[LB], config.histogram_bin_width);
    add_metric(Metric::new_lookups, global[NL], config.histogram_bin_width);
    add_metric(Metric::inter_layer, global[IL], config.histogram_bin_width);
    add_metric(Metric::persistence, persistence, config.persistence_bin_width);
    add_metric(Metric::page_utilization, pages, config.page_bin_width);

    rep.tiers = tier_label(rep.get(Metric::lookback).histogram, config.tiers);
    return rep;
}

}  // namespace dsakv
