#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stabsnap/harness.hpp"

#include <map>

using namespace stabsnap;

namespace {

World make_world(SimConfig cfg, Algorithm alg = Algorithm::NbSelfStab, std::uint64_t delta = 0)
{
    auto n = cfg.n;
    return World(std::move(cfg), make_nodes(alg, n, delta));
}

Envelope tagged(std::uint64_t tag)
{
    Envelope e;
    e.kind = MsgKind::Write;
    e.tag = tag;
    return e;
}

bool run_until_idle(World& w, std::uint64_t budget)
{
    for (std::uint64_t s = 0; s < budget; ++s) {
        bool busy = false;
        for (NodeId i = 0; i < w.size(); ++i)
            busy = busy || w.node(i).busy();
        if (!busy)
            return true;
        if (!w.step())
            return false;
    }
    return false;
}

} // namespace

TEST_CASE("channel evicts the oldest message when full")
{
    Channel c(2);
    CHECK_FALSE(c.push(tagged(1)).has_value());
    CHECK_FALSE(c.push(tagged(2)).has_value());
    auto ev = c.push(tagged(3));
    REQUIRE(ev.has_value());
    CHECK(ev->tag == 1);
    REQUIRE(c.size() == 2);
    CHECK(c.at(0).tag == 2);
    CHECK(c.at(1).tag == 3);
    CHECK(c.take(1).tag == 3);
    CHECK(c.size() == 1);
}

TEST_CASE("fairness cap forces delivery after ten drops in a row")
{
    SimConfig cfg;
    cfg.n = 3;
    cfg.seed = 5;
    cfg.faults.drop_rate = 1.0;
    cfg.faults.fairness_cap = 10;
    auto w = make_world(cfg);

    std::map<std::tuple<NodeId, NodeId, int, std::uint64_t>, int> run;
    int longest = 0, delivered_after_cap = 0;
    w.add_listener([&](const TraceRecord& r) {
        std::tuple<NodeId, NodeId, int, std::uint64_t> key{r.node, r.peer, int(r.msg), r.tag};
        if (r.kind == TraceKind::Drop) {
            longest = std::max(longest, ++run[key]);
        } else if (r.kind == TraceKind::Deliver) {
            if (run[key] == 10)
                ++delivered_after_cap;
            run[key] = 0;
        }
    });
    REQUIRE(w.invoke(0, {OpKind::Write, Value::from_string("v")}));
    CHECK(run_until_idle(w, 200000));
    CHECK(longest == 10);
    CHECK(delivered_after_cap > 0);
}

TEST_CASE("crashing a majority is a configuration error")
{
    SimConfig cfg;
    cfg.n = 3;
    auto w = make_world(cfg);
    w.crash(0);
    CHECK_THROWS_AS(w.crash(1), ConfigError);

    cfg.faults.allow_quorum_loss = true;
    auto w2 = make_world(cfg);
    w2.crash(0);
    CHECK_NOTHROW(w2.crash(1));
    CHECK(w2.crashed_count() == 2);
}

TEST_CASE("lone write costs n logical requests and n logical replies")
{
    for (std::size_t n : {3, 5}) {
        SimConfig cfg;
        cfg.n = n;
        cfg.seed = 11;
        auto w = make_world(cfg);
        REQUIRE(w.invoke(1, {OpKind::Write, Value::from_string("v")}));
        REQUIRE(run_until_idle(w, 100000));
        for (int s = 0; s < 3000; ++s)
            w.step();
        const auto& lg = w.stats().logical;
        CHECK(lg[std::size_t(MsgKind::Write)] == n);
        CHECK(lg[std::size_t(MsgKind::WriteAck)] == n);
        CHECK(lg[std::size_t(MsgKind::Snapshot)] == 0);
    }
}

TEST_CASE("field assignments overwrite node state")
{
    SimConfig cfg;
    cfg.n = 3;
    auto w = make_world(cfg, Algorithm::AtSelfStab, 1);
    TransientRecipe r;
    r.assignments.push_back({"node.1.ts", 42});
    r.assignments.push_back({"node.2.ssn", 7});
    r.assignments.push_back({"node.0.reg.2", {{"v", "6869"}, {"ts", 9}}});
    r.assignments.push_back({"node.0.pnd.1.sns", 5});
    r.assignments.push_back({"node.0.pnd.1.vc", {1, 2, 3}});
    w.inject_transient(r);
    CHECK(w.node(1).vars().ts == 42);
    CHECK(w.node(2).vars().ssn == 7);
    CHECK(w.node(0).vars().reg[2] == RegisterEntry{Value::from_string("hi"), 9});
    CHECK(w.node(0).vars().pnd[1].sns == 5);
    CHECK(w.node(0).vars().pnd[1].vc == VectorClock{1, 2, 3});

    TransientRecipe bad;
    bad.assignments.push_back({"node.1.nonsense", 1});
    CHECK_THROWS_AS(w.inject_transient(bad), ConfigError);
    TransientRecipe oob;
    oob.assignments.push_back({"node.9.ts", 1});
    CHECK_THROWS_AS(w.inject_transient(oob), ConfigError);
}

TEST_CASE("transient faults are only allowed before the first step")
{
    SimConfig cfg;
    auto w = make_world(cfg);
    w.step();
    TransientRecipe r;
    r.assignments.push_back({"node.0.ts", 3});
    CHECK_THROWS(w.inject_transient(r));
    CHECK_NOTHROW(w.inject_transient(r, true));
    CHECK(w.node(0).vars().ts == 3);
}

TEST_CASE("random corruption stays within the index bound")
{
    SimConfig cfg;
    cfg.n = 5;
    auto w = make_world(cfg, Algorithm::AtSelfStab, 1);
    TransientRecipe r;
    r.random = RandomCorruption{};
    r.random->max_index = 100;
    r.seed = 3;
    w.inject_transient(r);
    bool some_nonzero = false;
    for (NodeId i = 0; i < 5; ++i) {
        const auto& v = w.node(i).vars();
        CHECK(v.ts <= 100);
        CHECK(v.ssn <= 100);
        CHECK(v.sns <= 100);
        for (NodeId k = 0; k < 5; ++k)
            CHECK(v.reg[k].ts <= 100);
        some_nonzero = some_nonzero || v.ts || v.ssn;
    }
    CHECK(some_nonzero);
    std::size_t garbage = 0;
    w.for_each_in_flight([&](const Envelope&) { ++garbage; });
    CHECK(garbage > 0);
}

TEST_CASE("same seed gives the same trace")
{
    auto trace = [](std::uint64_t seed) {
        SimConfig cfg;
        cfg.n = 3;
        cfg.seed = seed;
        cfg.faults.drop_rate = 0.2;
        cfg.faults.dup_rate = 0.2;
        cfg.faults.reorder = true;
        auto w = make_world(cfg);
        std::string out;
        w.add_listener([&](const TraceRecord& r) { out += to_json(r).dump(); });
        w.invoke(0, {OpKind::Write, Value::from_string("a")});
        w.invoke(2, {OpKind::Snapshot, {}});
        for (int s = 0; s < 3000; ++s)
            w.step();
        return out;
    };
    CHECK(trace(4) == trace(4));
    CHECK(trace(4) != trace(5));
}

TEST_CASE("round robin visits every node")
{
    SimConfig cfg;
    cfg.n = 4;
    cfg.policy = Policy::RoundRobin;
    auto w = make_world(cfg);
    std::vector<int> ticks(4, 0);
    w.add_listener([&](const TraceRecord& r) {
        if (r.kind == TraceKind::IterationStart)
            ++ticks[r.node];
    });
    for (int s = 0; s < 400; ++s)
        w.step();
    for (int t : ticks)
        CHECK(t > 10);
}
