#include <random>

#include "doctest.h"
#include "dsakv/keyvalue.hpp"
#include "dsakv/roofline.hpp"

using namespace dsakv;

TEST_SUITE("roofline") {

TEST_CASE("toy bandwidth arithmetic") {
    DecodeWorkload w;
    w.tokens_per_second_per_user = 100;
    w.batch_size = 1;
    w.bytes_read_per_token = 1e9;
    GpuSpec g;
    g.hbm_bandwidth = 200e9;
    const Utilization u = utilization(w, g);
    CHECK(u.bandwidth == doctest::Approx(0.5));
    CHECK(u.compute == 0.0);

    w.bytes_read_per_token = 2e9;
    CHECK(utilization(w, g).bandwidth == doctest::Approx(1.0));
}

TEST_CASE("bad inputs") {
    DecodeWorkload w;
    GpuSpec g;
    g.hbm_bandwidth = 0;
    CHECK_THROWS_AS(utilization(w, g), std::invalid_argument);
    g = GpuSpec{};
    w.batch_size = -1;
    CHECK_THROWS_AS(utilization(w, g), std::invalid_argument);
    w = DecodeWorkload{};
    CHECK_THROWS_AS(min_devices(w, g, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(min_devices(w, g, 1.5), std::invalid_argument);
}

TEST_CASE("device counts") {
    GpuSpec g;
    g.hbm_bandwidth = 100;
    g.peak_compute = 100;
    DecodeWorkload w;
    w.tokens_per_second_per_user = 1;
    w.batch_size = 1;
    w.bytes_read_per_token = 50;
    auto plan = min_devices(w, g, 1.0);
    REQUIRE(plan.devices);
    CHECK(*plan.devices == 1);
    CHECK(plan.bound == "bandwidth");

    w.bytes_read_per_token = 350;
    CHECK(*min_devices(w, g, 1.0).devices == 4);
    w.bytes_read_per_token = 700;
    CHECK(*min_devices(w, g, 1.0).devices == 7);
    CHECK(*min_devices(w, g, 0.5).devices == 14);

    w.flops_per_token = 900;
    plan = min_devices(w, g, 1.0);
    CHECK(plan.bound == "compute");
    CHECK(*plan.devices == 9);
    CHECK(plan.per_device.compute == doctest::Approx(1.0));

    CHECK_FALSE(min_devices(w, g, 1.0, 5).devices.has_value());
}

TEST_CASE("brute-force device count on random inputs") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> bytes(1.0, 5e3), cap(0.05, 1.0);
    for (int i = 0; i < 200; ++i) {
        GpuSpec g;
        g.hbm_bandwidth = 100;
        g.peak_compute = 1000;
        DecodeWorkload w;
        w.tokens_per_second_per_user = 1;
        w.batch_size = 1;
        w.bytes_read_per_token = bytes(rng);
        w.flops_per_token = bytes(rng);
        const double c = cap(rng);
        const auto plan = min_devices(w, g, c);
        REQUIRE(plan.devices);
        std::uint64_t n = 1;
        auto fits = [&](std::uint64_t d) {
            const Utilization u = utilization(w, g);
            return u.bandwidth / d <= c && u.compute / d <= c;
        };
        while (!fits(n)) ++n;
        CHECK(*plan.devices == n);
    }
}

TEST_CASE("scale invariance and monotonicity") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> pos(0.5, 2.0), alpha(1.01, 10.0);
    for (int i = 0; i < 100; ++i) {
        DecodeWorkload w;
        w.batch_size = 1 + rng() % 64;
        w.bytes_read_per_token = pos(rng) * 1e9;
        w.flops_per_token = pos(rng) * 1e11;
        GpuSpec g;
        const Utilization base = utilization(w, g);
        const double a = alpha(rng);

        DecodeWorkload ws = w;
        ws.bytes_read_per_token *= a;
        GpuSpec gs = g;
        gs.hbm_bandwidth *= a;
        CHECK(utilization(ws, gs).bandwidth == doctest::Approx(base.bandwidth).epsilon(1e-12));
        CHECK(utilization(ws, g).bandwidth > base.bandwidth);

        DecodeWorkload wb = w;
        wb.batch_size *= a;
        CHECK(utilization(wb, g).bandwidth > base.bandwidth);
        CHECK(utilization(wb, g).compute > base.compute);

        DecodeWorkload wf = w;
        wf.flops_per_token *= a;
        CHECK(utilization(wf, g).compute > base.compute);

        DecodeWorkload w2 = w;
        w2.bytes_read_per_token *= 2;
        w2.flops_per_token = 0;
        DecodeWorkload w1 = w;
        w1.flops_per_token = 0;
        const auto n1 = *min_devices(w1, g, 1.0).devices;
        const auto n2 = *min_devices(w2, g, 1.0).devices;
        CHECK(n2 >= 2 * n1 - 1);
        CHECK(n2 <= 2 * n1);
    }
}

TEST_CASE("assumption files") {
    const auto a = roofline_from_text(
        "name = toy\nbytes_read_per_token = 1e9\ntokens_per_second_per_user = 100\nbatch_size = 1\n"
        "hbm_bandwidth = 200e9\n");
    CHECK(a.name == "toy");
    const RooflineRow row = evaluate(a);
    CHECK(row.single_device.bandwidth == doctest::Approx(0.5));
    CHECK(row.single_device.compute == 0.0);
    CHECK(*row.plan.devices == 1);

    const auto d = roofline_from_text("weight_bytes = 800\nbatch_size = 8\nkv_bytes_per_context_token = 2\n"
                                      "context_tokens = 10\nactive_params = 7\n");
    CHECK(d.workload.bytes_read_per_token == doctest::Approx(120.0));
    CHECK(d.workload.flops_per_token == doctest::Approx(14.0));

    CHECK_THROWS_AS(roofline_from_text("batch_size = 8\n"), ConfigError);
    CHECK_THROWS_AS(roofline_from_text("bytes_read_per_token = 1\nweight_bytes = 1\n"), ConfigError);
    CHECK_THROWS_AS(roofline_from_text("bytes_read_per_token = 1\nutilization_cap = 2\n"), ConfigError);
    CHECK_THROWS_AS(roofline_from_text("bytes_read_per_token = 1\ngpu = h100\n"), ConfigError);
    CHECK_THROWS_AS(load_roofline("/nonexistent/file.roofline"), ConfigReadError);
}

TEST_CASE("shipped 70B assumptions are bandwidth bound") {
    const RooflineRow row = evaluate(load_roofline(DSAKV_SOURCE_DIR "/configs/roofline/llama-3.1-70b.roofline"));
    REQUIRE(row.plan.devices);
    CHECK(row.plan.bound == "bandwidth");
    CHECK(row.plan.per_device.bandwidth > 0.90);
    CHECK(row.plan.per_device.compute < 0.02);
    // Directional match with the published 95% / 1.3% row.
    CHECK(row.plan.per_device.bandwidth == doctest::Approx(0.95).epsilon(0.20));
    CHECK(row.plan.per_device.compute == doctest::Approx(0.013).epsilon(0.40));
}

TEST_CASE("slowdown table layout") {
    const std::vector<SweepRow> rows{{0, 0, 1.87, 0, 0}, {5ull << 20, 0, 1.5, 0, 0}};
    const std::string t = format_slowdown_table(rows);
    CHECK(t.find("LL reserved") == 0);
    CHECK(t.find("5MB") != std::string::npos);
    CHECK(t.find("1.87") != std::string::npos);
    CHECK(t.find("1.50") != std::string::npos);
}

}  // TEST_SUITE
