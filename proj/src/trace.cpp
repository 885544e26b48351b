#include "dsakv/trace.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace dsakv {

std::uint64_t TraceMeta::expected_set_size(std::uint32_t t) const {
    return std::min<std::uint64_t>(top_k, context_at(t));
}

const char* to_string(ViolationKind kind) {
    switch (kind) {
    case ViolationKind::meta_non_positive: return "meta_non_positive";
    case ViolationKind::meta_top_k_exceeds_context: return "meta_top_k_exceeds_context";
    case ViolationKind::step_count_mismatch: return "step_count_mismatch";
    case ViolationKind::step_index: return "step_index";
    case ViolationKind::layer_count: return "layer_count";
    case ViolationKind::not_ascending: return "not_ascending";
    case ViolationKind::duplicate: return "duplicate";
    case ViolationKind::causality: return "causality";
    case ViolationKind::set_size: return "set_size";
    }
    return "unknown";
}

namespace {

void check_meta(const TraceMeta& m, ValidationReport& out) {
    const std::pair<const char*, std::uint32_t> counts[] = {
        {"n_layers", m.n_layers},       {"top_k", m.top_k},
        {"prefill_len", m.prefill_len}, {"n_steps", m.n_steps},
        {"page_size_tokens", m.page_size_tokens}, {"kv_token_bytes", m.kv_token_bytes},
    };
    for (const auto& [name, value] : counts) {
        if (value == 0) {
            out.push_back({ViolationKind::meta_non_positive, -1, -1, std::string(name) + " must be >= 1"});
        }
    }
    if (m.n_steps > 0 && m.top_k > m.context_at(m.n_steps - 1) + 1) {
        std::ostringstream os;
        os << "top_k " << m.top_k << " exceeds final context " << m.context_at(m.n_steps - 1) + 1;
        out.push_back({ViolationKind::meta_top_k_exceeds_context, -1, -1, os.str()});
    }
}

void check_set(const TraceMeta& m, std::uint32_t t, std::uint32_t layer, const TopKSet& set,
               ValidationReport& out) {
    const auto step = static_cast<std::int64_t>(t);
    const auto lay = static_cast<std::int64_t>(layer);
    bool dup = false;
    bool unsorted = false;
    for (std::size_t i = 1; i < set.size(); ++i) {
        if (set[i] == set[i - 1] && !dup) {
            dup = true;
            out.push_back({ViolationKind::duplicate, step, lay, "index " + std::to_string(set[i]) + " repeated"});
        } else if (set[i] < set[i - 1] && !unsorted) {
            unsorted = true;
            out.push_back({ViolationKind::not_ascending, step, lay,
                           "index " + std::to_string(set[i]) + " follows " + std::to_string(set[i - 1])});
        }
    }
    const std::uint64_t context = m.context_at(t);
    const auto bad = std::find_if(set.begin(), set.end(), [&](TokenIndex s) { return s >= context; });
    if (bad != set.end()) {
        out.push_back({ViolationKind::causality, step, lay,
                       "index " + std::to_string(*bad) + " >= context " + std::to_string(context)});
    }
    if (set.size() != m.expected_set_size(t)) {
        out.push_back({ViolationKind::set_size, step, lay,
                       "size " + std::to_string(set.size()) + " != " + std::to_string(m.expected_set_size(t))});
    }
}

}  // namespace

ValidationReport validate_trace(const Trace& trace) {
    ValidationReport out;
    const TraceMeta& m = trace.meta;
    check_meta(m, out);
    // Set-level invariants are judged against the metadata; skip them if it is broken.
    if (!out.empty()) return out;

    if (trace.steps.size() != m.n_steps) {
        out.push_back({ViolationKind::step_count_mismatch, -1, -1,
                       std::to_string(trace.steps.size()) + " steps, header says " + std::to_string(m.n_steps)});
    }
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const DecodeStep& st = trace.steps[i];
        if (st.t != i) {
            out.push_back({ViolationKind::step_index, static_cast<std::int64_t>(i), -1,
                           "expected t=" + std::to_string(i) + ", found " + std::to_string(st.t)});
        }
        if (st.per_layer.size() != m.n_layers) {
            out.push_back({ViolationKind::layer_count, static_cast<std::int64_t>(i), -1,
                           std::to_string(st.per_layer.size()) + " layers, expected " + std::to_string(m.n_layers)});
        }
        for (std::size_t l = 0; l < st.per_layer.size(); ++l) {
            check_set(m, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(l), st.per_layer[l], out);
        }
    }
    return out;
}

void require_valid(const Trace& trace) {
    const ValidationReport report = validate_trace(trace);
    if (report.empty()) return;
    const Violation& v = report.front();
    std::ostringstream os;
    os << "invalid trace: " << to_string(v.kind);
    if (v.step >= 0) os << " at step " << v.step;
    if (v.layer >= 0) os << " layer " << v.layer;
    os << ": " << v.detail;
    if (report.size() > 1) os << " (+" << report.size() - 1 << " more)";
    throw std::invalid_argument(os.str());
}

}  // namespace dsakv
