#include "dsakv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <vector>

#include "counter_rng.hpp"
#include "dsakv/atomic_file.hpp"
#include "dsakv/keyvalue.hpp"

namespace dsakv {

using detail::counter_normal;
using detail::counter_uniform;
using detail::Stream;

void GenConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("GenConfig: " + msg); };
    if (prefill_len == 0) fail("prefill_len must be >= 1");
    if (n_steps == 0) fail("n_steps must be >= 1");
    if (n_layers == 0) fail("n_layers must be >= 1");
    if (top_k == 0) fail("top_k must be >= 1");
    if (std::uint64_t{top_k} > std::uint64_t{prefill_len} + n_steps) fail("top_k exceeds prefill_len + n_steps");
    if (!(query_drift >= 0.0 && query_drift <= 1.0)) fail("query_drift must be in [0,1]");
    if (!(recency_strength >= 0.0) || !std::isfinite(recency_strength)) fail("recency_strength must be >= 0");
    if (!(recency_scale > 0.0) || !std::isfinite(recency_scale)) fail("recency_scale must be > 0");
    if (!(anchor_fraction >= 0.0 && anchor_fraction <= 1.0)) fail("anchor_fraction must be in [0,1]");
    if (!(anchor_boost >= 0.0) || !std::isfinite(anchor_boost)) fail("anchor_boost must be >= 0");
    if (!(layer_decorrelation >= 0.0 && layer_decorrelation <= 1.0)) fail("layer_decorrelation must be in [0,1]");
    if (key_span == 0) fail("key_span must be >= 1");
    if (!(key_locality >= 0.0 && key_locality <= 1.0)) fail("key_locality must be in [0,1]");
    if (page_size_tokens == 0) fail("page_size_tokens must be >= 1");
    if (kv_token_bytes == 0) fail("kv_token_bytes must be >= 1");
}

namespace {

float dot(const float* a, const float* b, std::size_t n) {
    // Eight independent partial sums, combined in a fixed order.
    float acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    for (; i < n; ++i) acc[0] += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

}  // namespace

double indexer_score(std::span<const float> q, std::span<const float> k, std::span<const float> w,
                     const IndexerParams& params) {
    const std::size_t width = params.width();
    if (params.n_heads == 0 || params.dim == 0) throw std::invalid_argument("indexer_score: empty indexer shape");
    if (q.size() != width || k.size() != width || w.size() != params.n_heads) {
        throw std::invalid_argument("indexer_score: expected q,k of " + std::to_string(width) + " and w of " +
                                    std::to_string(params.n_heads) + ", got " + std::to_string(q.size()) + ", " +
                                    std::to_string(k.size()) + ", " + std::to_string(w.size()));
    }
    double score = 0.0;
    for (std::uint32_t j = 0; j < params.n_heads; ++j) {
        const float d = dot(q.data() + std::size_t{j} * params.dim, k.data() + std::size_t{j} * params.dim, params.dim);
        score += static_cast<double>(w[j]) * std::max(0.0, static_cast<double>(d));
    }
    return score;
}

TopKSet top_k_select(std::span<const double> scores, std::size_t k) {
    const std::size_t take = std::min(k, scores.size());
    std::vector<TokenIndex> order(scores.size());
    std::iota(order.begin(), order.end(), TokenIndex{0});
    auto better = [&](TokenIndex a, TokenIndex b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    if (take < order.size()) {
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
        order.resize(take);
    }
    std::sort(order.begin(), order.end());
    return order;
}

namespace {

// Unit-norm AR(1) walk per head: q_t = normalize(rho*q_{t-1} + sqrt(1-rho^2)*g_t).
class QueryWalk {
public:
    QueryWalk(std::uint64_t seed, Stream stream, std::uint64_t lane, const IndexerParams& p, double rho)
        : seed_(seed), stream_(stream), lane_(lane), p_(p), rho_(rho), q_(p.width()) {}

    void advance(std::uint32_t step) {
        const double fresh = step == 0 ? 1.0 : std::sqrt(std::max(0.0, 1.0 - rho_ * rho_));
        const double keep = step == 0 ? 0.0 : rho_;
        if (step > 0 && rho_ >= 1.0) return;
        for (std::size_t e = 0; e < q_.size(); ++e) {
            q_[e] = keep * q_[e] + fresh * counter_normal(seed_, stream_, lane_, step, e);
        }
        normalize_heads(q_, p_);
    }

    const std::vector<double>& value() const { return q_; }

    static void normalize_heads(std::vector<double>& v, const IndexerParams& p) {
        for (std::uint32_t j = 0; j < p.n_heads; ++j) {
            double* h = v.data() + std::size_t{j} * p.dim;
            double norm = 0.0;
            for (std::uint32_t d = 0; d < p.dim; ++d) norm += h[d] * h[d];
            norm = std::sqrt(norm);
            if (norm > 0.0)
                for (std::uint32_t d = 0; d < p.dim; ++d) h[d] /= norm;
        }
    }

private:
    std::uint64_t seed_;
    Stream stream_;
    std::uint64_t lane_;
    IndexerParams p_;
    double rho_;
    std::vector<double> q_;
};

std::vector<TopKSet> generate_layer(const GenConfig& cfg, const IndexerParams& p, std::uint32_t layer,
                                    const std::vector<std::uint8_t>& anchors) {
    const std::size_t width = p.width();
    const std::size_t n_tokens = std::size_t{cfg.prefill_len} + cfg.n_steps - 1;
    const double shared = std::sqrt(1.0 - cfg.layer_decorrelation);
    const double own = std::sqrt(cfg.layer_decorrelation);
    const double token_part = std::sqrt(1.0 - cfg.key_locality);
    const double span_part = std::sqrt(cfg.key_locality);

    // Keys are drawn once per token and never recomputed.
    std::vector<float> keys(n_tokens * width);
    for (std::size_t s = 0; s < n_tokens; ++s) {
        for (std::size_t e = 0; e < width; ++e) {
            double v = 0.0;
            if (shared > 0.0) v += shared * counter_normal(cfg.seed, Stream::shared_key, 0, s, e);
            if (own > 0.0) v += own * counter_normal(cfg.seed, Stream::layer_key, layer, s, e);
            if (cfg.key_locality > 0.0) {
                const std::uint64_t span = s / cfg.key_span;
                double sv = 0.0;
                if (shared > 0.0) sv += shared * counter_normal(cfg.seed, Stream::shared_span_key, 0, span, e);
                if (own > 0.0) sv += own * counter_normal(cfg.seed, Stream::layer_span_key, layer, span, e);
                v = token_part * v + span_part * sv;
            }
            keys[s * width + e] = static_cast<float>(v);
        }
    }
    std::vector<float> weights(p.n_heads);
    for (std::uint32_t j = 0; j < p.n_heads; ++j) {
        const double u_shared = counter_uniform(cfg.seed, Stream::head_weight, 0, j, 0);
        const double u_own = counter_uniform(cfg.seed, Stream::head_weight, 1 + std::uint64_t{layer}, j, 0);
        weights[j] = static_cast<float>(0.5 + (1.0 - cfg.layer_decorrelation) * u_shared +
                                        cfg.layer_decorrelation * u_own);
    }

    QueryWalk shared_walk(cfg.seed, Stream::shared_query, 0, p, cfg.query_drift);
    QueryWalk own_walk(cfg.seed, Stream::layer_query, layer, p, cfg.query_drift);
    std::vector<double> mixed(width);
    std::vector<float> query(width);
    std::vector<double> scores;
    scores.reserve(n_tokens);

    std::vector<TopKSet> out;
    out.reserve(cfg.n_steps);
    for (std::uint32_t t = 0; t < cfg.n_steps; ++t) {
        if (shared > 0.0) shared_walk.advance(t);
        if (own > 0.0) own_walk.advance(t);
        for (std::size_t e = 0; e < width; ++e) {
            mixed[e] = (shared > 0.0 ? shared * shared_walk.value()[e] : 0.0) +
                       (own > 0.0 ? own * own_walk.value()[e] : 0.0);
        }
        QueryWalk::normalize_heads(mixed, p);
        std::transform(mixed.begin(), mixed.end(), query.begin(), [](double v) { return static_cast<float>(v); });

        const std::size_t context = std::size_t{cfg.prefill_len} + t;
        scores.resize(context);
        for (std::size_t s = 0; s < context; ++s) {
            double score = indexer_score(query, std::span<const float>(keys.data() + s * width, width), weights, p);
            if (cfg.recency_strength > 0.0) {
                score += cfg.recency_strength * std::exp(-static_cast<double>(context - s) / cfg.recency_scale);
            }
            if (s < anchors.size() && anchors[s]) score += cfg.anchor_boost;
            scores[s] = score;
        }
        out.push_back(top_k_select(scores, cfg.top_k));
    }
    return out;
}

}  // namespace

Trace generate_trace(const GenConfig& config, const IndexerParams& params) {
    config.validate();
    if (params.n_heads == 0 || params.dim == 0) throw std::invalid_argument("IndexerParams: heads and dim must be >= 1");

    std::vector<std::uint8_t> anchors(config.prefill_len, 0);
    if (config.anchor_fraction > 0.0) {
        for (std::uint32_t s = 0; s < config.prefill_len; ++s) {
            anchors[s] = counter_uniform(config.seed, Stream::anchor, 0, s / config.key_span, 0) <= config.anchor_fraction;
        }
    }

    std::vector<std::vector<TopKSet>> per_layer(config.n_layers);
    const unsigned workers = std::max(1u, std::min(std::thread::hardware_concurrency(), config.n_layers));
    if (workers == 1) {
        for (std::uint32_t l = 0; l < config.n_layers; ++l) per_layer[l] = generate_layer(config, params, l, anchors);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::uint32_t l = w; l < config.n_layers; l += workers)
                    per_layer[l] = generate_layer(config, params, l, anchors);
            });
        }
    }

    Trace tr;
    tr.meta = TraceMeta{config.model_name,      config.n_layers,       config.top_k,
                        config.prefill_len,     config.n_steps,        config.page_size_tokens,
                        config.kv_token_bytes,  config.tenant_id};
    tr.steps.resize(config.n_steps);
    for (std::uint32_t t = 0; t < config.n_steps; ++t) {
        tr.steps[t].t = t;
        tr.steps[t].per_layer.resize(config.n_layers);
        for (std::uint32_t l = 0; l < config.n_layers; ++l) tr.steps[t].per_layer[l] = std::move(per_layer[l][t]);
    }
    return tr;
}

// ---- key=value ------------------------------------------------------------

std::string gen_config_to_text(const GenConfig& c, const IndexerParams& p) {
    std::string out;
    auto line = [&](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
    line("seed", std::to_string(c.seed));
    line("prefill_len", std::to_string(c.prefill_len));
    line("n_steps", std::to_string(c.n_steps));
    line("n_layers", std::to_string(c.n_layers));
    line("top_k", std::to_string(c.top_k));
    line("query_drift", format_double(c.query_drift));
    line("recency_strength", format_double(c.recency_strength));
    line("recency_scale", format_double(c.recency_scale));
    line("anchor_fraction", format_double(c.anchor_fraction));
    line("anchor_boost", format_double(c.anchor_boost));
    line("layer_decorrelation", format_double(c.layer_decorrelation));
    line("key_span", std::to_string(c.key_span));
    line("key_locality", format_double(c.key_locality));
    line("model_name", c.model_name);
    line("page_size_tokens", std::to_string(c.page_size_tokens));
    line("kv_token_bytes", std::to_string(c.kv_token_bytes));
    line("tenant_id", std::to_string(c.tenant_id));
    line("indexer_heads", std::to_string(p.n_heads));
    line("indexer_dim", std::to_string(p.dim));
    return out;
}

namespace {

std::uint32_t to_u32(const KeyValueFile& kv, const std::string& key, std::uint32_t fallback) {
    const std::uint64_t v = kv.get_u64(key, fallback);
    if (v > 0xffffffffULL) throw ConfigError("'" + key + "' does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::pair<GenConfig, IndexerParams> gen_config_from_text(std::string_view text, const std::string& origin) {
    const KeyValueFile kv = KeyValueFile::parse(text, origin);
    kv.reject_unknown({"seed", "prefill_len", "n_steps", "n_layers", "top_k", "query_drift", "recency_strength",
                       "recency_scale", "anchor_fraction", "anchor_boost", "layer_decorrelation", "key_span",
                       "key_locality", "model_name",
                       "page_size_tokens", "kv_token_bytes", "tenant_id", "indexer_heads", "indexer_dim"});
    GenConfig c;
    IndexerParams p;
    c.seed = kv.get_u64("seed", c.seed);
    c.prefill_len = to_u32(kv, "prefill_len", c.prefill_len);
    c.n_steps = to_u32(kv, "n_steps", c.n_steps);
    c.n_layers = to_u32(kv, "n_layers", c.n_layers);
    c.top_k = to_u32(kv, "top_k", c.top_k);
    c.query_drift = kv.get_double("query_drift", c.query_drift);
    c.recency_strength = kv.get_double("recency_strength", c.recency_strength);
    c.recency_scale = kv.get_double("recency_scale", c.recency_scale);
    c.anchor_fraction = kv.get_double("anchor_fraction", c.anchor_fraction);
    c.anchor_boost = kv.get_double("anchor_boost", c.anchor_boost);
    c.layer_decorrelation = kv.get_double("layer_decorrelation", c.layer_decorrelation);
    c.key_span = to_u32(kv, "key_span", c.key_span);
    c.key_locality = kv.get_double("key_locality", c.key_locality);
    c.model_name = kv.get_string("model_name", c.model_name);
    c.page_size_tokens = to_u32(kv, "page_size_tokens", c.page_size_tokens);
    c.kv_token_bytes = to_u32(kv, "kv_token_bytes", c.kv_token_bytes);
    c.tenant_id = to_u32(kv, "tenant_id", c.tenant_id);
    p.n_heads = to_u32(kv, "indexer_heads", p.n_heads);
    p.dim = to_u32(kv, "indexer_dim", p.dim);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    if (p.n_heads == 0 || p.dim == 0) throw ConfigError(origin + ": indexer_heads and indexer_dim must be >= 1");
    return {c, p};
}

std::pair<GenConfig, IndexerParams> load_gen_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::runtime_error& e) {
        throw ConfigReadError(e.what());
    }
    return gen_config_from_text(text, path.string());
}

}  // namespace dsakv
