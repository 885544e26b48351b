#include <random>

#include "doctest.h"
#include "dsakv/trace.hpp"
#include "oracles.hpp"

using namespace dsakv;

namespace {

Trace two_step_trace() {
    Trace tr;
    tr.meta.model_name = "t";
    tr.meta.n_layers = 1;
    tr.meta.top_k = 2;
    tr.meta.prefill_len = 4;
    tr.meta.n_steps = 2;
    tr.steps = {{0, {{1, 3}}}, {1, {{0, 4}}}};
    return tr;
}

std::vector<ViolationKind> kinds(const ValidationReport& r) {
    std::vector<ViolationKind> out;
    for (const auto& v : r) out.push_back(v.kind);
    return out;
}

}  // namespace

TEST_SUITE("trace") {

TEST_CASE("well-formed trace has no violations") {
    CHECK(validate_trace(two_step_trace()).empty());
    CHECK_NOTHROW(require_valid(two_step_trace()));
}

TEST_CASE("index beyond the context is a causality violation") {
    Trace tr = two_step_trace();
    tr.steps[1].per_layer[0] = {0, tr.meta.prefill_len + 1};
    const auto r = validate_trace(tr);
    REQUIRE(r.size() == 1);
    CHECK(r[0].kind == ViolationKind::causality);
    CHECK(r[0].step == 1);
    CHECK(r[0].layer == 0);
}

TEST_CASE("index equal to the context length is already out of reach") {
    Trace tr = two_step_trace();
    tr.steps[0].per_layer[0] = {1, 4};
    CHECK(kinds(validate_trace(tr)) == std::vector{ViolationKind::causality});
}

TEST_CASE("repeated index is one duplicate violation") {
    Trace tr = two_step_trace();
    tr.steps[0].per_layer[0] = {3, 3};
    CHECK(kinds(validate_trace(tr)) == std::vector{ViolationKind::duplicate});
    CHECK_THROWS_AS(require_valid(tr), std::invalid_argument);
}

TEST_CASE("descending pair is flagged") {
    Trace tr = two_step_trace();
    tr.steps[0].per_layer[0] = {3, 1};
    CHECK(kinds(validate_trace(tr)) == std::vector{ViolationKind::not_ascending});
}

TEST_CASE("set size must track min(top_k, context)") {
    Trace tr = two_step_trace();
    tr.meta.top_k = 3;
    tr.meta.prefill_len = 2;
    tr.steps = {{0, {{0, 1}}}, {1, {{0, 1, 2}}}};
    CHECK(validate_trace(tr).empty());
    tr.steps[1].per_layer[0] = {0, 2};
    CHECK(kinds(validate_trace(tr)) == std::vector{ViolationKind::set_size});
}

TEST_CASE("structural violations") {
    Trace tr = two_step_trace();
    tr.steps[1].t = 5;
    CHECK(kinds(validate_trace(tr)) == std::vector{ViolationKind::step_index});

    tr = two_step_trace();
    tr.steps.pop_back();
    CHECK(kinds(validate_trace(tr)) == std::vector{ViolationKind::step_count_mismatch});

    tr = two_step_trace();
    tr.steps[0].per_layer.push_back({1, 2});
    CHECK(kinds(validate_trace(tr)) == std::vector{ViolationKind::layer_count});
}

TEST_CASE("broken metadata stops before set checks") {
    Trace tr = two_step_trace();
    tr.meta.kv_token_bytes = 0;
    CHECK(kinds(validate_trace(tr)) == std::vector{ViolationKind::meta_non_positive});

    tr = two_step_trace();
    tr.meta.top_k = 100;
    CHECK(kinds(validate_trace(tr)) == std::vector{ViolationKind::meta_top_k_exceeds_context});
}

TEST_CASE("random corruption beyond the context is always caught") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        Trace tr = oracle::random_trace(rng, 2, 4, 6, 5);
        const auto t = static_cast<std::uint32_t>(rng() % tr.meta.n_steps);
        auto& sel = tr.steps[t].per_layer[rng() % 2];
        sel.back() = static_cast<std::uint32_t>(tr.meta.context_at(t) + rng() % 50);
        const auto r = validate_trace(tr);
        REQUIRE(r.size() == 1);
        CHECK(r[0].kind == ViolationKind::causality);
        CHECK(r[0].step == t);
    }
}

}  // TEST_SUITE
