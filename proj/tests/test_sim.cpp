#include "doctest.h"

#include <algorithm>

#include "zcdp/scenario.hpp"
#include "zcdp/sim_runner.hpp"

using namespace zcdp;

namespace {

std::string echo_pair_manifest(const std::string& extra = "") {
    return R"({
      "name": "echo_pair",
      "seed": 7,
      "duration_s": 2.0,
      "window_s": 0.5,
      "iteration_period_ns": 100000,
      "nodes": [0, 1],
      "tenants": [{"id": 1, "weight": 1, "pool_buffers": 256, "buffer_size": 4096}],
      "functions": [
        {"fn": 10, "tenant": 1, "node": 1, "app": "echo_server"},
        {"fn": 11, "tenant": 1, "node": 0, "app": "echo_client",
         "target": 10, "concurrency": 8, "message_size": 1024,
         "requests": 500}
      ])" + extra + "\n}";
}

std::unique_ptr<Simulation> run_scenario_file(const std::string& name) {
    auto load = load_scenario_file(std::string(ZCDP_SCENARIO_DIR) + "/" + name);
    REQUIRE_MESSAGE(load.ok(), load.error);
    auto sim = std::make_unique<Simulation>(*load.config);
    REQUIRE(sim->setup().ok());
    sim->run();
    return sim;
}

}  // namespace

TEST_CASE("echo pair two-sided: all delivered, zero copies, no violations") {
    auto load = parse_scenario(echo_pair_manifest());
    REQUIRE_MESSAGE(load.ok(), load.error);
    Simulation sim(*load.config);
    REQUIRE(sim.setup().ok());
    sim.run();

    ClientReport r = sim.client_report();
    CHECK(r.sent == 500);
    CHECK(r.completed == 500);
    CHECK(r.mismatches == 0);
    CHECK(sim.stats().sw_copies.load() == 0);
    CHECK(sim.stats().violation_total() == 0);
    CHECK(sim.stats().dead_letters.load() == 0);
    // one fabric send per direction per message
    CHECK(sim.stats().fabric_data_ops.load() == 2 * 500);
}

TEST_CASE("co-located echo pair never touches the fabric") {
    std::string m = R"({
      "name": "echo_local",
      "seed": 7,
      "duration_s": 1.0,
      "iteration_period_ns": 100000,
      "nodes": [0],
      "tenants": [{"id": 1, "weight": 1}],
      "functions": [
        {"fn": 10, "tenant": 1, "node": 0, "app": "echo_server"},
        {"fn": 11, "tenant": 1, "node": 0, "app": "echo_client",
         "target": 10, "concurrency": 4, "message_size": 512,
         "requests": 200}
      ]})";
    auto load = parse_scenario(m);
    REQUIRE_MESSAGE(load.ok(), load.error);
    Simulation sim(*load.config);
    REQUIRE(sim.setup().ok());
    sim.run();
    CHECK(sim.client_report().completed == 200);
    CHECK(sim.client_report().mismatches == 0);
    CHECK(sim.stats().fabric_data_ops.load() == 0);
    CHECK(sim.stats().sw_copies.load() == 0);
}

TEST_CASE("fixed seed gives bit-identical metrics output") {
    auto load = parse_scenario(echo_pair_manifest());
    REQUIRE(load.ok());
    std::string csv1, csv2, sum1, sum2;
    {
        Simulation sim(*load.config);
        REQUIRE(sim.setup().ok());
        sim.run();
        csv1 = sim.metrics_csv();
        sum1 = sim.summary_json();
    }
    {
        Simulation sim(*load.config);
        REQUIRE(sim.setup().ok());
        sim.run();
        csv2 = sim.metrics_csv();
        sum2 = sim.summary_json();
    }
    CHECK(csv1 == csv2);
    CHECK(sum1 == sum2);
    CHECK(csv1.find("window_start_s,tenant,delivered,bytes") == 0);
}

TEST_CASE("DWRR holds 6:1:2 shares within 5% in every steady window") {
    auto sim = run_scenario_file("fairness.json");
    std::map<TenantId, uint32_t> weights = {{1, 6}, {2, 1}, {3, 2}};
    auto bands = sim->metrics().fairness(weights);
    // tenant 3 joins at t=3s: expect a {1,2} band followed by a {1,2,3} band
    bool saw_two = false, saw_three = false;
    for (const auto& b : bands) {
        if (b.windows == 0) continue;
        if (b.active == std::vector<TenantId>{1, 2}) saw_two = true;
        if (b.active == std::vector<TenantId>{1, 2, 3}) saw_three = true;
        CAPTURE(b.active.size());
        CAPTURE(b.max_rel_error);
        CHECK(b.max_rel_error <= 0.05);
    }
    CHECK(saw_two);
    CHECK(saw_three);
    CHECK(sim->stats().violation_total() == 0);
}

TEST_CASE("FCFS lets heavy tenants starve the high-weight tenant") {
    auto sim = run_scenario_file("fairness_fcfs.json");
    std::map<TenantId, uint32_t> weights = {{1, 6}, {2, 1}, {3, 2}};
    auto bands = sim->metrics().fairness(weights);
    bool checked = false;
    for (const auto& b : bands) {
        if (b.active != std::vector<TenantId>{1, 2, 3} || b.windows == 0)
            continue;
        checked = true;
        // tenant 1 holds 6/9 of the entitlement but receives under half of it
        REQUIRE(b.min_share_ratio.count(1));
        CHECK(b.min_share_ratio.at(1) < 0.5);
    }
    CHECK(checked);
}

TEST_CASE("distributed chain: byte-correct fan-out with many exchanges") {
    auto sim = run_scenario_file("chain_distributed.json");
    ClientReport r = sim->client_report();
    CHECK(r.completed == 10000);
    CHECK(r.mismatches == 0);
    CHECK(sim->stats().sw_copies.load() == 0);
    CHECK(sim->stats().violation_total() == 0);
    // every request crosses >= 11 function exchanges end to end
    CHECK(sim->stats().fn_exchanges.load() >= 11 * r.completed);
}

TEST_CASE("co-located chain: same answers, zero fabric traffic") {
    auto sim = run_scenario_file("chain_colocated.json");
    ClientReport r = sim->client_report();
    CHECK(r.completed == 10000);
    CHECK(r.mismatches == 0);
    CHECK(sim->stats().fabric_data_ops.load() == 0);
    CHECK(sim->stats().sw_copies.load() == 0);
}

TEST_CASE("ingress echo: exactly one boundary copy each way per request") {
    auto sim = run_scenario_file("ingress_echo.json");
    const uint64_t expect = 8 * 50;
    CHECK(sim->ingress_responses_ok() == expect);
    CHECK(sim->ingress_responses_bad() == 0);
    CHECK(sim->stats().ingress_copies_in.load() == expect);
    CHECK(sim->stats().ingress_copies_out.load() == expect);
    CHECK(sim->stats().sw_copies.load() == 2 * expect);
    CHECK(sim->stats().stale_responses.load() == 0);
    CHECK(sim->stats().violation_total() == 0);
}

TEST_CASE("transfer primitives: latency ordering at 4KB") {
    // median: the first exchange pays the one-time RC connection setup on
    // the two-sided path, which is not a per-transfer cost
    auto median_latency = [](Simulation& sim) {
        auto lat = sim.metrics().tenants().at(1).latencies;
        REQUIRE(!lat.empty());
        std::sort(lat.begin(), lat.end());
        return double(lat[lat.size() / 2]);
    };
    auto ts = run_scenario_file("primitives_two_sided.json");
    auto owdl = run_scenario_file("primitives_owdl.json");
    auto owrc_b = run_scenario_file("primitives_owrc_best.json");
    auto owrc_w = run_scenario_file("primitives_owrc_worst.json");
    for (Simulation* s : {ts.get(), owdl.get(), owrc_b.get(), owrc_w.get()}) {
        CHECK(s->client_report().completed == 200);
        CHECK(s->client_report().mismatches == 0);
    }
    double l_ts = median_latency(*ts);
    double l_owdl = median_latency(*owdl);
    double l_owrc_b = median_latency(*owrc_b);
    double l_owrc_w = median_latency(*owrc_w);
    CAPTURE(l_ts);
    CAPTURE(l_owrc_b);
    CAPTURE(l_owrc_w);
    CAPTURE(l_owdl);
    CHECK(l_ts < l_owrc_b);
    CHECK(l_owrc_b < l_owrc_w);
    CHECK(l_owrc_w < l_owdl);
}
