#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsakv {

using TokenIndex = std::uint32_t;

/// Per-sequence trace metadata. All counts are strictly positive except tenant_id.
struct TraceMeta {
    std::string model_name;
    std::uint32_t n_layers = 1;
    std::uint32_t top_k = 1;
    std::uint32_t prefill_len = 1;
    std::uint32_t n_steps = 1;
    std::uint32_t page_size_tokens = 16;
    std::uint32_t kv_token_bytes = 1;
    std::uint32_t tenant_id = 0;

    /// Tokens available to the selection at decode step `t`.
    std::uint64_t context_at(std::uint32_t t) const { return std::uint64_t{prefill_len} + t; }

    /// Size a well-formed selection must have at step `t`.
    std::uint64_t expected_set_size(std::uint32_t t) const;

    bool operator==(const TraceMeta&) const = default;
};

/// Selected KV positions for one (step, layer): absolute, 0-based, strictly ascending.
using TopKSet = std::vector<TokenIndex>;

struct DecodeStep {
    std::uint32_t t = 0;
    std::vector<TopKSet> per_layer;

    bool operator==(const DecodeStep&) const = default;
};

struct Trace {
    TraceMeta meta;
    std::vector<DecodeStep> steps;

    const TopKSet& selection(std::uint32_t t, std::uint32_t layer) const { return steps[t].per_layer[layer]; }

    bool operator==(const Trace&) const = default;
};

enum class ViolationKind {
    meta_non_positive,   // a count field is zero
    meta_top_k_exceeds_context,
    step_count_mismatch, // steps.size() != meta.n_steps
    step_index,          // step t out of order / not contiguous
    layer_count,         // per_layer.size() != n_layers
    not_ascending,
    duplicate,
    causality,           // index >= prefill_len + t
    set_size,            // |set| != min(top_k, prefill_len + t)
};

const char* to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::int64_t step = -1;  // -1 when not tied to a step
    std::int64_t layer = -1; // -1 when not tied to a layer
    std::string detail;
};

using ValidationReport = std::vector<Violation>;

/// Reports one record per broken invariant per (step, layer); never throws.
ValidationReport validate_trace(const Trace& trace);

/// Throws std::invalid_argument carrying the first violation if the trace is invalid.
void require_valid(const Trace& trace);

}  // namespace dsakv
