#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stabsnap/harness.hpp"
#include "stabsnap/snapshot_at.hpp"

#include <cmath>

using namespace stabsnap;

TEST_CASE("log-log slope of exact power laws")
{
    std::vector<double> x = {3, 5, 7, 9}, lin, quad;
    for (double v : x) {
        lin.push_back(4 * v);
        quad.push_back(0.5 * v * v);
    }
    CHECK(loglog_slope(x, lin) == doctest::Approx(1.0));
    CHECK(loglog_slope(x, quad) == doctest::Approx(2.0));
    CHECK_THROWS_AS(loglog_slope({1}, {1}), std::invalid_argument);
}

TEST_CASE("workload values are unique and padded")
{
    auto a = workload_value(1, 2, 8);
    auto b = workload_value(2, 1, 8);
    CHECK(a.bytes.size() == 8);
    CHECK(a != b);
    CHECK(a.hex() == "5701000000000002");
    CHECK(workload_value(0, 0, 16).bytes.size() == 16);
    CHECK(workload_value(0, 0, 2).bytes.size() == 8);
}

TEST_CASE("scenario JSON round trip")
{
    for (const auto& name : builtin_names()) {
        auto s = builtin_scenario(name);
        auto j = to_json(s);
        CHECK(to_json(scenario_from_json(j)) == j);
    }
    Scenario s;
    s.sim.faults.crashes.push_back({2, 100, true});
    s.transient = TransientRecipe{};
    s.transient->assignments.push_back({"node.0.ts", 5});
    Envelope e;
    e.kind = MsgKind::Gossip;
    e.sender = 0;
    e.receiver = 1;
    s.transient->forged.push_back(e);
    s.reset_enabled = true;
    s.reset.maxint = 64;
    auto j = to_json(s);
    CHECK(to_json(scenario_from_json(j)) == j);
}

TEST_CASE("bad scenarios are configuration errors")
{
    CHECK_THROWS_AS(scenario_from_json({{"algorithm", "paxos"}}), ConfigError);
    CHECK_THROWS_AS(scenario_from_json({{"colour", 1}}), ConfigError);
    CHECK_THROWS_AS(scenario_from_json({{"n", "three"}}), ConfigError);
    CHECK_THROWS_AS(builtin_scenario("nope"), ConfigError);

    Scenario s;
    s.sim.n = 3;
    s.workload.loops.push_back({7, OpKind::Write, 1, 0});
    CHECK_THROWS_AS(run_scenario(s), ConfigError);

    Scenario r;
    r.algorithm = Algorithm::NbBaseline;
    r.reset_enabled = true;
    CHECK_THROWS_AS(run_scenario(r), ConfigError);

    Scenario c;
    c.sim.n = 3;
    c.sim.faults.crashes = {{0, 0, false}, {1, 0, false}};
    c.workload.loops.push_back({2, OpKind::Write, 1, 0});
    CHECK_THROWS_AS(run_scenario(c), ConfigError);
}

TEST_CASE("runs are reproducible from scenario and seed")
{
    auto s = builtin_scenario("convergence");
    auto a = run_scenario(s);
    auto b = run_scenario(s);
    CHECK(a.trace_digest == b.trace_digest);
    CHECK(to_json(a).dump() == to_json(b).dump());
    s.sim.seed = 99;
    s.transient->seed = 99;
    CHECK(run_scenario(s).trace_digest != a.trace_digest);
}

TEST_CASE("builtin scenarios complete and pass")
{
    for (const auto& name : builtin_names()) {
        CAPTURE(name);
        auto r = run_scenario(builtin_scenario(name));
        CHECK(r.status == "complete");
        CHECK(r.passed());
        CHECK(r.ops_completed > 0);
    }
}

TEST_CASE("report output")
{
    auto r = run_scenario(builtin_scenario("lone_write"));
    auto row = to_csv_row(r);
    auto header = csv_header();
    CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));
    auto j = to_json(r);
    CHECK(j["schema"] == 1);
    CHECK(j["ops"].size() == r.ops.size());
    // a lone write reaches all five nodes once and collects five acks
    CHECK(r.msgs_per_write == doctest::Approx(10.0));
}

TEST_CASE("workload waits for a clean audit")
{
    auto s = builtin_scenario("convergence");
    auto r = run_scenario(s);
    REQUIRE(r.workload_start_step.has_value());
    REQUIRE(r.stabilization_step.has_value());
    CHECK(*r.workload_start_step > *r.stabilization_step);
    CHECK(r.audit_violations_at_end == 0);
}

TEST_CASE("index reset zeroes indices and keeps values")
{
    Scenario s;
    s.sim.n = 3;
    s.sim.seed = 8;
    s.algorithm = Algorithm::AtSelfStab;
    s.delta = 1;
    s.audit = false;
    s.reset_enabled = true;
    s.reset.maxint = 32;
    s.workload.loops.push_back({0, OpKind::Write, 40, 0});
    s.workload.loops.push_back({1, OpKind::Snapshot, 10, 5});
    auto r = run_scenario(s);
    CHECK(r.status == "complete");
    CHECK(r.resets >= 1);
    REQUIRE(r.reset_checks.size() == r.resets);
    for (const auto& c : r.reset_checks) {
        CHECK(c.indices_zero);
        CHECK(c.values_preserved);
        CHECK(c.aborted <= c.busy_while_frozen);
    }
    CHECK(r.verdict.ok);
}

TEST_CASE("sweep overrides the axis")
{
    auto s = builtin_scenario("lone_write");
    auto reps = sweep(s, "n", {3, 5});
    REQUIRE(reps.size() == 2);
    CHECK(reps[0].n == 3);
    CHECK(reps[1].n == 5);
    CHECK(reps[0].msgs_per_write == doctest::Approx(6.0));
    CHECK_THROWS_AS(sweep(s, "colour", {1}), ConfigError);
}
