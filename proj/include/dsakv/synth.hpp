#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "dsakv/trace.hpp"

namespace dsakv {

/// Lightning-indexer shape: `n_heads` heads of `dim`-wide query/key projections.
struct IndexerParams {
    std::uint32_t n_heads = 4;
    std::uint32_t dim = 64;

    std::size_t width() const { return std::size_t{n_heads} * dim; }
};

/// Knobs of the synthetic decode-trace generator.
///
/// Scores are the indexer score of a drifting unit-norm query against fixed random
/// keys, plus an exponential recency bias and a constant boost for a seeded subset of
/// prefill tokens ("anchors"). `layer_decorrelation` blends a process shared by all
/// layers with an independent per-layer one (0 = identical layers, 1 = independent).
struct GenConfig {
    std::uint64_t seed = 0;
    std::uint32_t prefill_len = 1000;
    std::uint32_t n_steps = 200;
    std::uint32_t n_layers = 8;
    std::uint32_t top_k = 128;
    double query_drift = 0.9;        // rho in [0,1]; 1 = frozen query
    double recency_strength = 0.0;   // beta >= 0
    double recency_scale = 32.0;     // tau > 0, tokens
    double anchor_fraction = 0.0;    // of prefill tokens
    double anchor_boost = 0.0;
    double layer_decorrelation = 1.0;
    // Tokens in the same aligned span of `key_span` positions share their anchor status and
    // a key component of relative weight `key_locality`; 0 gives independent keys.
    std::uint32_t key_span = 1;
    double key_locality = 0.0;

    // Metadata copied into the emitted trace.
    std::string model_name = "synthetic";
    std::uint32_t page_size_tokens = 16;
    std::uint32_t kv_token_bytes = 4096;
    std::uint32_t tenant_id = 0;

    /// Throws std::invalid_argument on the first out-of-range field.
    void validate() const;
};

/// Sum over heads of w_j * max(0, <q_j, k_j>). `q` and `k` are head-major, `params.width()` long.
/// Throws std::invalid_argument on a size mismatch.
double indexer_score(std::span<const float> q, std::span<const float> k, std::span<const float> w,
                     const IndexerParams& params);

/// Positions of the min(k, n) largest scores, ties toward the lower position, ascending.
TopKSet top_k_select(std::span<const double> scores, std::size_t k);

/// Deterministic in (config, params): the same inputs give bit-identical traces.
Trace generate_trace(const GenConfig& config, const IndexerParams& params = {});

/// key=value round trip. Indexer shape lives in the same file (indexer_heads, indexer_dim).
std::string gen_config_to_text(const GenConfig& config, const IndexerParams& params);
std::pair<GenConfig, IndexerParams> gen_config_from_text(std::string_view text,
                                                         const std::string& origin = "<string>");
std::pair<GenConfig, IndexerParams> load_gen_config(const std::filesystem::path& path);

}  // namespace dsakv
