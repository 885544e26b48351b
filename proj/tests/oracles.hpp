#pragma once

// Reference implementations used only by tests. They favour obviously-correct set
// operations over speed and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "dsakv/cache_sim.hpp"
#include "dsakv/lru.hpp"
#include "dsakv/trace.hpp"

namespace oracle {

using dsakv::CacheKey;
using dsakv::Trace;

inline std::set<std::uint32_t> as_set(const dsakv::TopKSet& v) { return {v.begin(), v.end()}; }

inline std::vector<double> working_set(const Trace& tr, std::uint32_t layer, std::uint32_t N, std::uint32_t stride) {
    std::vector<double> out;
    const std::size_t n = tr.steps.size();
    for (std::size_t m = 0; m + N <= n; m += stride) {
        std::set<std::uint32_t> u;
        for (std::size_t t = m; t < m + N; ++t) {
            auto s = as_set(tr.steps[t].per_layer[layer]);
            u.insert(s.begin(), s.end());
        }
        out.push_back(static_cast<double>(u.size()) / tr.meta.top_k);
    }
    return out;
}

inline std::vector<double> persistence(const Trace& tr, std::uint32_t layer) {
    std::set<std::uint32_t> seen;
    for (const auto& st : tr.steps) seen.insert(st.per_layer[layer].begin(), st.per_layer[layer].end());
    std::vector<double> out;
    for (std::uint32_t s : seen) {
        std::uint32_t run = 0;
        for (const auto& st : tr.steps) {
            if (as_set(st.per_layer[layer]).count(s)) {
                ++run;
            } else if (run > 0) {
                out.push_back(run);
                run = 0;
            }
        }
        if (run > 0) out.push_back(run);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<double> lookback(const Trace& tr, std::uint32_t layer) {
    std::vector<double> out;
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
        const double ctx = static_cast<double>(tr.meta.prefill_len) + static_cast<double>(t);
        for (std::uint32_t s : tr.steps[t].per_layer[layer]) out.push_back((ctx - s) / tr.meta.top_k);
    }
    return out;
}

inline std::vector<double> new_lookups(const Trace& tr, std::uint32_t layer) {
    std::vector<double> out;
    for (std::size_t t = 1; t < tr.steps.size(); ++t) {
        auto cur = as_set(tr.steps[t].per_layer[layer]);
        auto prev = as_set(tr.steps[t - 1].per_layer[layer]);
        std::vector<std::uint32_t> diff;
        std::set_difference(cur.begin(), cur.end(), prev.begin(), prev.end(), std::back_inserter(diff));
        out.push_back(static_cast<double>(diff.size()) / tr.meta.top_k);
    }
    return out;
}

inline std::vector<double> inter_layer(const Trace& tr) {
    std::vector<double> out;
    for (const auto& st : tr.steps) {
        for (std::size_t l = 1; l < st.per_layer.size(); ++l) {
            auto a = as_set(st.per_layer[l]);
            auto b = as_set(st.per_layer[l - 1]);
            std::vector<std::uint32_t> both;
            std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
            out.push_back(static_cast<double>(both.size()) / tr.meta.top_k);
        }
    }
    return out;
}

inline std::vector<double> page_utilization(const Trace& tr, std::uint32_t layer, std::uint32_t P) {
    std::vector<double> out;
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
        const auto& sel = tr.steps[t].per_layer[layer];
        if (sel.empty()) continue;
        const std::uint64_t ctx = std::uint64_t{tr.meta.prefill_len} + t;
        std::map<std::uint64_t, std::uint64_t> hits;
        for (std::uint32_t s : sel) ++hits[s / P];
        double sum = 0.0;
        for (auto [page, n] : hits) {
            std::uint64_t existing = 0;
            for (std::uint64_t tok = page * P; tok < (page + 1) * P; ++tok)
                if (tok < ctx) ++existing;
            sum += static_cast<double>(n) / static_cast<double>(existing);
        }
        out.push_back(sum / static_cast<double>(hits.size()));
    }
    return out;
}

/// Recency list in a plain vector; front is most recent.
class NaiveLru {
public:
    explicit NaiveLru(std::size_t capacity) : capacity_(capacity) {}

    bool access(const CacheKey& k) {
        auto it = std::find(keys_.begin(), keys_.end(), k);
        if (it == keys_.end()) return false;
        keys_.erase(it);
        keys_.insert(keys_.begin(), k);
        return true;
    }

    std::vector<CacheKey> insert(const std::vector<CacheKey>& ks) {
        for (const auto& k : ks) {
            auto it = std::find(keys_.begin(), keys_.end(), k);
            if (it != keys_.end()) keys_.erase(it);
            keys_.insert(keys_.begin(), k);
        }
        std::vector<CacheKey> evicted;
        while (keys_.size() > capacity_) {
            evicted.push_back(keys_.back());
            keys_.pop_back();
        }
        return evicted;
    }

    const std::vector<CacheKey>& order() const { return keys_; }

private:
    std::size_t capacity_;
    std::vector<CacheKey> keys_;
};

struct SimTotals {
    std::uint64_t hits = 0;
    std::uint64_t missed_tokens = 0;
    std::uint64_t missed_pages = 0;
    double ideal_ns = 0.0;
    double actual_ns = 0.0;
    std::vector<std::uint64_t> pages_per_step;
};

/// Straight-line replay of the cost model with the naive LRU.
inline SimTotals simulate(const std::vector<Trace>& traces, const dsakv::CacheConfig& c) {
    SimTotals r;
    NaiveLru lru(c.reserved_bytes / c.kv_token_bytes);
    const double per_token_ns = static_cast<double>(c.kv_token_bytes) / c.hbm_bandwidth * 1e9;
    for (std::uint32_t t = 0; t < traces[0].meta.n_steps; ++t) {
        std::uint64_t step_pages = 0;
        for (std::uint32_t ten = 0; ten < traces.size(); ++ten) {
            const std::uint64_t ctx = std::uint64_t{traces[ten].meta.prefill_len} + t;
            for (std::uint32_t l = 0; l < c.layers_per_device; ++l) {
                const auto& sel = traces[ten].steps[t].per_layer[l];
                std::set<std::uint32_t> pages;
                for (std::uint32_t s : sel) {
                    const CacheKey key{ten, l, s};
                    if (lru.access(key)) {
                        ++r.hits;
                        continue;
                    }
                    ++r.missed_tokens;
                    pages.insert(s / c.page_size_tokens);
                    std::vector<CacheKey> fill;
                    if (c.insert_whole_page) {
                        const std::uint32_t lo = s / c.page_size_tokens * c.page_size_tokens;
                        for (std::uint32_t p = lo; p < lo + c.page_size_tokens && p < ctx; ++p)
                            if (p != s) fill.push_back({ten, l, p});
                    }
                    fill.push_back(key);
                    lru.insert(fill);
                }
                const double rounds = std::max(1.0, std::ceil(static_cast<double>(pages.size()) / c.miss_concurrency));
                const double transfer = static_cast<double>(sel.size()) * per_token_ns;
                r.actual_ns += transfer + rounds * c.miss_latency_ns;
                r.ideal_ns += transfer + c.miss_latency_ns;
                step_pages += pages.size();
            }
        }
        r.missed_pages += step_pages;
        r.pages_per_step.push_back(step_pages);
    }
    return r;
}

/// Valid random trace: each set is a uniform sample of min(k, context) positions.
inline Trace random_trace(std::mt19937_64& rng, std::uint32_t n_layers, std::uint32_t top_k, std::uint32_t prefill,
                          std::uint32_t n_steps, std::uint32_t page = 16) {
    Trace tr;
    tr.meta.model_name = "rand";
    tr.meta.n_layers = n_layers;
    tr.meta.top_k = top_k;
    tr.meta.prefill_len = prefill;
    tr.meta.n_steps = n_steps;
    tr.meta.page_size_tokens = page;
    tr.meta.kv_token_bytes = 64;
    std::vector<std::uint32_t> pool;
    for (std::uint32_t t = 0; t < n_steps; ++t) {
        dsakv::DecodeStep st;
        st.t = t;
        const std::uint32_t ctx = prefill + t;
        pool.resize(ctx);
        for (std::uint32_t i = 0; i < ctx; ++i) pool[i] = i;
        for (std::uint32_t l = 0; l < n_layers; ++l) {
            dsakv::TopKSet sel;
            std::sample(pool.begin(), pool.end(), std::back_inserter(sel), std::min(top_k, ctx), rng);
            std::sort(sel.begin(), sel.end());
            st.per_layer.push_back(std::move(sel));
        }
        tr.steps.push_back(std::move(st));
    }
    return tr;
}

/// Random trace whose sets drift: each step keeps a random share of the previous set,
/// so reuse distances are short enough for small caches to matter.
inline Trace sticky_trace(std::mt19937_64& rng, std::uint32_t n_layers, std::uint32_t top_k, std::uint32_t prefill,
                          std::uint32_t n_steps, double keep) {
    Trace tr = random_trace(rng, n_layers, top_k, prefill, n_steps);
    std::bernoulli_distribution stay(keep);
    for (std::uint32_t t = 1; t < n_steps; ++t) {
        const std::uint32_t ctx = prefill + t;
        for (std::uint32_t l = 0; l < n_layers; ++l) {
            std::set<std::uint32_t> next;
            for (std::uint32_t s : tr.steps[t - 1].per_layer[l])
                if (stay(rng)) next.insert(s);
            std::uniform_int_distribution<std::uint32_t> any(0, ctx - 1);
            const std::size_t want = std::min(top_k, ctx);
            while (next.size() < want) next.insert(any(rng));
            tr.steps[t].per_layer[l].assign(next.begin(), next.end());
        }
    }
    return tr;
}

}  // namespace oracle
