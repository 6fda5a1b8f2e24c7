#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stabsnap/message.hpp"
#include "stabsnap/snapshot_at.hpp"

#include <limits>

using namespace stabsnap;

namespace {

RegisterEntry E(const char* v, Timestamp ts) { return {Value::from_string(v), ts}; }
RegisterArray A(std::vector<RegisterEntry> e) { return RegisterArray(std::move(e)); }

} // namespace

TEST_CASE("entries are ordered by timestamp only")
{
    CHECK(entry_leq(E("z", 1), E("a", 1)));
    CHECK(entry_leq(RegisterEntry::bottom(), E("a", 0)));
    CHECK_FALSE(entry_leq(E("a", 2), E("a", 1)));
    // ties keep the first argument
    CHECK(entry_max(E("x", 3), E("y", 3)).value == Value::from_string("x"));
    CHECK(entry_max(E("x", 3), E("y", 4)).value == Value::from_string("y"));
}

TEST_CASE("array order is pointwise and can be incomparable")
{
    auto a = A({E("x", 1), E("y", 3)});
    auto b = A({E("x", 2), E("y", 2)});
    CHECK_FALSE(array_leq(a, b));
    CHECK_FALSE(array_leq(b, a));
    auto c = A({E("x", 2), E("y", 3)});
    CHECK(array_leq(a, c));
    CHECK(array_leq(b, c));
    CHECK(array_leq(c, c));
    CHECK_THROWS_AS(array_leq(a, RegisterArray(3)), std::invalid_argument);
}

TEST_CASE("merge_into takes the pointwise maximum")
{
    auto a = A({E("a", 1), E("b", 5), RegisterEntry::bottom()});
    merge_into(a, A({E("c", 3), E("d", 5), E("e", 1)}));
    CHECK(a == A({E("c", 3), E("b", 5), E("e", 1)}));
}

TEST_CASE("merge repairs the own write index")
{
    ProtocolCore core(1, 3);
    core.ts = 2;
    core.reg[1] = E("mine", 2);
    std::vector<RegisterArray> rec = {A({E("p", 4), E("old", 7), RegisterEntry::bottom()}),
                                      A({RegisterEntry::bottom(), E("mine", 2), E("q", 1)})};
    auto plain = core;
    merge(plain, rec, false);
    CHECK(plain.ts == 2);
    CHECK(plain.reg == A({E("p", 4), E("old", 7), E("q", 1)}));

    merge(core, rec, true);
    CHECK(core.ts == 7);
    CHECK(core.reg == plain.reg);
}

TEST_CASE("vector clocks")
{
    auto vc = vector_clock(A({E("x", 4), RegisterEntry::bottom(), E("y", 9)}));
    CHECK(vc == VectorClock{4, 0, 9});
    CHECK(vc_leq({1, 2}, {1, 3}));
    CHECK_FALSE(vc_leq({2, 2}, {1, 3}));
    CHECK(vc_distance({2, 3}, {1, 1}) == 3);
    CHECK(vc_distance({0, 5}, {5, 0}) == 5);
    CHECK(vc_distance({0, 0}, {5, 5}) == 0);
    const auto big = std::numeric_limits<std::uint64_t>::max();
    CHECK(vc_distance({big, big}, {0, 0}) == big);
}

TEST_CASE("value helpers")
{
    CHECK(Value::from_string("ab").hex() == "6162");
    CHECK(to_string(RegisterEntry::bottom()) == "_");
    CHECK(to_string(E("ab", 3)) == "(6162,3)");
}

TEST_CASE("help set follows the delta rule")
{
    SUBCASE("delta 0 helps any announced task")
    {
        SnapshotATNode node(1, 2, 0);
        node.vars_mut().pnd[0].sns = 1;
        auto d = node.help_set();
        REQUIRE(d.size() == 1);
        CHECK(d[0] == TaskRecord{0, 1, std::nullopt});
    }
    SUBCASE("delta 2 helps once the clock moved by at least 2")
    {
        SnapshotATNode node(1, 2, 2);
        auto& v = node.vars_mut();
        v.pnd[0] = PendingTask{1, VectorClock{1, 1}, std::nullopt};
        v.reg[0] = E("a", 2);
        v.reg[1] = E("b", 3);
        v.ts = 3;
        auto d = node.help_set();
        REQUIRE(d.size() == 1);
        CHECK(d[0].node == 0);
        CHECK(d[0].vc == VectorClock{1, 1});

        v.reg[1] = E("b", 1);
        v.ts = 1;
        CHECK(node.help_set().empty()); // distance 1
    }
    SUBCASE("finished tasks and unannounced tasks are skipped")
    {
        SnapshotATNode node(1, 2, 0);
        auto& v = node.vars_mut();
        v.pnd[0] = PendingTask{3, std::nullopt, RegisterArray(2)};
        CHECK(node.help_set().empty());
        v.pnd[0] = PendingTask{};
        CHECK(node.help_set().empty());
    }
    SUBCASE("own task is always included with a large delta")
    {
        SnapshotATNode node(0, 2, 1000);
        auto& v = node.vars_mut();
        v.sns = 2;
        v.pnd[0] = PendingTask{2, VectorClock{0, 0}, std::nullopt};
        auto d = node.help_set();
        REQUIRE(d.size() == 1);
        CHECK(d[0].node == 0);
        CHECK(d[0].sns == 2);
    }
}

TEST_CASE("envelope JSON round trip")
{
    Envelope e;
    e.kind = MsgKind::SnapshotAck;
    e.sender = 2;
    e.receiver = 1;
    e.reg = A({E("x", 1), RegisterEntry::bottom(), E("z", 9)});
    e.ssn = 17;
    e.saves.push_back({1, 2, A({E("q", 1), E("r", 2), E("s", 3)})});
    e.tag = 99;
    e.seq = 7;
    CHECK(envelope_from_json(to_json(e)) == e);

    Envelope s;
    s.kind = MsgKind::Snapshot;
    s.reg = e.reg;
    s.ssn = 3;
    s.tasks.push_back({0, 4, VectorClock{1, 2, 3}});
    s.tasks.push_back({2, 1, std::nullopt});
    CHECK(envelope_from_json(to_json(s)) == s);

    Envelope a;
    a.kind = MsgKind::SaveAck;
    a.save_keys.push_back({2, 5});
    CHECK(envelope_from_json(to_json(a)) == a);

    Envelope g;
    g.kind = MsgKind::Gossip;
    g.entry = E("w", 4);
    g.sns = 6;
    g.reset = ResetGossip{true, 1, 10, 11, 12};
    CHECK(envelope_from_json(to_json(g)) == g);

    CHECK(array_from_json(to_json(e.reg)) == e.reg);
    CHECK(entry_from_json(to_json(RegisterEntry::bottom())) == RegisterEntry::bottom());
}

TEST_CASE("save tags do not depend on key order")
{
    CHECK(save_tag({{0, 1}, {2, 3}}) == save_tag({{2, 3}, {0, 1}}));
    CHECK(save_tag({{0, 1}}) != save_tag({{0, 2}}));
}

TEST_CASE("majority")
{
    CHECK(majority(1) == 1);
    CHECK(majority(3) == 2);
    CHECK(majority(4) == 3);
    CHECK(majority(5) == 3);
}
