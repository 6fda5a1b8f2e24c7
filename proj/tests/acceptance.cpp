// Acceptance suite. Prints one PASS/FAIL line per criterion; exit status is
// nonzero when any criterion fails. Optional arguments pick criteria by number.

#include "stabsnap/harness.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>

using namespace stabsnap;

namespace {

// Pinned tolerances.
constexpr std::size_t kConvergenceTrials = 100;
constexpr std::size_t kConvergenceCycles = 5;
constexpr double kConvergenceSeconds = 60.0;
constexpr std::size_t kClosureTrials = 1000;
constexpr std::size_t kExhaustiveMaxOps = 10;
constexpr std::size_t kBaselineSeeds = 200;
constexpr std::size_t kStarveCycles = 100;
constexpr std::size_t kStarveTail = 2;
constexpr std::size_t kTerminationC = 4;
constexpr std::size_t kTerminationSeeds = 5;
constexpr double kLinearSlope = 1.3;
constexpr double kQuadraticSlope = 1.7;
constexpr std::uint64_t kLargeDelta = 1000;
constexpr std::size_t kBatchSeeds = 50;
constexpr std::uint64_t kBatchDelta = 4;
constexpr std::uint64_t kMaxInt = 1u << 10;
constexpr std::size_t kDeterminismTrials = 10;

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, auto... a)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

Scenario convergence_trial(Algorithm alg, std::uint64_t seed)
{
    Scenario s;
    s.name = "convergence";
    s.algorithm = alg;
    s.delta = 1;
    s.sim.n = 5;
    s.sim.seed = seed;
    RandomCorruption rc;
    rc.max_index = 1u << 12;
    rc.channel_fill = 0.5;
    rc.forge_tasks = true;
    s.transient = TransientRecipe{};
    s.transient->random = rc;
    s.transient->seed = seed * 7919 + 13;
    s.min_cycles = 12;
    s.workload.after_stabilization = true;
    s.workload.loops.push_back({0, OpKind::Write, 2, 0});
    s.workload.loops.push_back({3, OpKind::Snapshot, 2, 0});
    s.step_budget = 200'000;
    return s;
}

Outcome criterion1()
{
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    std::size_t worst = 0;
    for (auto alg : {Algorithm::NbSelfStab, Algorithm::AtSelfStab}) {
        for (std::uint64_t seed = 1; seed <= kConvergenceTrials; ++seed) {
            auto r = run_scenario(convergence_trial(alg, seed));
            std::size_t c = r.stabilization_cycle.value_or(0);
            worst = std::max(worst, c);
            if (r.status != "complete" || c > kConvergenceCycles || r.audit_violations_at_end) {
                o.pass = false;
                o.detail += fmt("[%s seed %llu: status %s, cycles %zu, violations %zu] ",
                                to_string(alg), (unsigned long long)seed, r.status.c_str(), c,
                                r.audit_violations_at_end);
            }
        }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= kConvergenceSeconds)
        o.pass = false;
    o.detail += fmt("worst %zu cycles (bound %zu), %.1f s", worst, kConvergenceCycles, secs);
    return o;
}

Scenario closure_trial(std::uint64_t trial)
{
    std::mt19937_64 rng(0xC105EDull + trial);
    auto pick = [&](std::uint64_t lo, std::uint64_t hi) {
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
    };
    Scenario s;
    s.name = "closure";
    s.sim.n = pick(0, 1) ? 5 : 3;
    s.sim.seed = trial + 1;
    s.algorithm = trial % 2 ? Algorithm::AtSelfStab : Algorithm::NbSelfStab;
    static const std::uint64_t deltas[] = {0, 1, 4};
    s.delta = deltas[pick(0, 2)];
    s.sim.faults.drop_rate = 0.1;
    s.sim.faults.dup_rate = 0.1;
    s.sim.faults.reorder = true;
    std::size_t f = pick(0, std::min<std::uint64_t>(2, (s.sim.n - 1) / 2));
    std::vector<NodeId> ids(s.sim.n);
    for (NodeId i = 0; i < s.sim.n; ++i)
        ids[i] = i;
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t c = 0; c < f; ++c)
        s.sim.faults.crashes.push_back({ids[c], pick(0, 4000), false});
    s.transient = TransientRecipe{};
    s.transient->random = RandomCorruption{};
    s.transient->seed = trial * 31 + 5;
    s.workload.after_stabilization = true;
    std::size_t ops = pick(6, 10);
    std::vector<NodeScript> scripts(s.sim.n);
    for (NodeId i = 0; i < s.sim.n; ++i)
        scripts[i].node = i;
    for (std::size_t k = 0; k < ops; ++k)
        scripts[pick(0, s.sim.n - 1)].ops.push_back({pick(0, 1) ? OpKind::Write : OpKind::Snapshot, 0});
    for (auto& sc : scripts)
        if (!sc.ops.empty())
            s.workload.scripts.push_back(sc);
    s.step_budget = 400'000;
    return s;
}

Outcome criterion2()
{
    Outcome o;
    std::size_t agreed = 0, failed = 0, incomplete = 0, collided = 0;
    for (std::uint64_t t = 0; t < kClosureTrials; ++t) {
        auto r = run_scenario(closure_trial(t));
        collided += r.ts_collisions_at_workload_start > 0;
        if (r.status != "complete") {
            ++incomplete;
            o.pass = false;
            if (incomplete <= 3)
                o.detail += fmt("[trial %llu: %s] ", (unsigned long long)t, r.status.c_str());
        }
        if (!r.verdict.ok) {
            ++failed;
            o.pass = false;
            if (failed <= 3)
                o.detail += fmt("[trial %llu: %s] ", (unsigned long long)t,
                                r.verdict.certificate.c_str());
        }
        if (r.verdict.ops <= kExhaustiveMaxOps) {
            auto e = check_exhaustive(r.history, kExhaustiveMaxOps);
            if (e.ok != r.verdict.ok) {
                o.pass = false;
                o.detail += fmt("[trial %llu: checkers disagree] ", (unsigned long long)t);
            } else {
                ++agreed;
            }
        }
    }
    o.detail += fmt("%zu trials, %zu not linearizable, %zu incomplete, %zu exhaustive agreements, "
                    "%zu started with a timestamp collision",
                    kClosureTrials, failed, incomplete, agreed, collided);
    return o;
}

struct Projected {
    int type;
    NodeId node;
    std::uint64_t data_step;
    std::string payload;
    bool operator==(const Projected&) const = default;
};

std::vector<Projected> project(const History& h)
{
    std::vector<Projected> out;
    for (const auto& e : h.events()) {
        std::string p = e.value.hex();
        if (e.type == HistoryEvent::Type::Respond)
            p += "|" + std::to_string(e.ts) + "|" + to_string(e.result);
        out.push_back({static_cast<int>(e.type), e.node, e.data_step, p});
    }
    return out;
}

Outcome criterion3()
{
    Outcome o;
    std::size_t same = 0;
    for (std::uint64_t seed = 1; seed <= kBaselineSeeds; ++seed) {
        Scenario s;
        s.name = "baseline";
        s.sim.n = seed % 2 ? 5 : 3;
        s.sim.seed = seed;
        s.sim.faults.drop_rate = 0.05;
        s.sim.faults.dup_rate = 0.05;
        s.sim.faults.reorder = true;
        s.audit = false;
        s.workload.loops.push_back({0, OpKind::Write, 4, 3});
        s.workload.loops.push_back({1, OpKind::Snapshot, 3, 5});
        s.workload.loops.push_back({2, OpKind::Write, 3, 0});
        s.algorithm = Algorithm::NbSelfStab;
        auto a = run_scenario(s);
        s.algorithm = Algorithm::NbBaseline;
        auto b = run_scenario(s);
        bool eq = a.status == "complete" && b.status == "complete" &&
                  project(a.history) == project(b.history) && a.history.events().size() > 0;
        if (eq) {
            ++same;
        } else {
            o.pass = false;
            if (same + 3 > seed)
                o.detail += fmt("[seed %llu differs] ", (unsigned long long)seed);
        }
    }
    o.detail += fmt("%zu/%zu seeds identical", same, kBaselineSeeds);
    return o;
}

Outcome criterion4()
{
    Outcome o;
    auto s = builtin_scenario("starvation");
    auto r = run_scenario(s);
    const OpRecord* snap = nullptr;
    std::uint64_t last_write = 0;
    for (const auto& op : r.ops) {
        if (op.kind == OpKind::Snapshot && op.node == s.starvation->snapshotter)
            snap = &op;
        if (op.kind == OpKind::Write && op.respond_step)
            last_write = std::max(last_write, *op.respond_step);
    }
    if (!snap || !snap->respond_step || r.status != "complete") {
        o.pass = false;
        o.detail = "snapshot never returned";
        return o;
    }
    auto cycle_of = [&](std::uint64_t step) {
        return static_cast<std::size_t>(
            std::lower_bound(r.cycle_boundaries.begin(), r.cycle_boundaries.end(), step) -
            r.cycle_boundaries.begin());
    };
    std::size_t starved = cycle_of(last_write) - cycle_of(snap->invoke_step);
    std::size_t tail = cycle_of(*snap->respond_step) - cycle_of(last_write);
    o.pass = starved >= kStarveCycles && tail <= kStarveTail && r.verdict.ok;
    o.detail = fmt("unterminated for %zu cycles (need >= %zu), returned %zu cycles after the last "
                   "write (bound %zu)",
                   starved, kStarveCycles, tail, kStarveTail);
    return o;
}

Outcome criterion5()
{
    Outcome o;
    for (std::uint64_t delta : {0, 1, 4, 8}) {
        std::size_t worst = 0;
        for (std::uint64_t seed = 1; seed <= kTerminationSeeds; ++seed) {
            auto s = builtin_scenario("steady_writer");
            s.delta = delta;
            s.sim.seed = seed;
            auto r = run_scenario(s);
            worst = std::max(worst, r.max_snapshot_cycles);
            if (r.status != "complete" || !r.verdict.ok ||
                r.max_snapshot_cycles > kTerminationC * (delta + 1))
                o.pass = false;
        }
        o.detail += fmt("delta %llu: worst %zu cycles (bound %zu); ", (unsigned long long)delta,
                        worst, kTerminationC * (delta + 1));
    }
    return o;
}

Outcome criterion6()
{
    Outcome o;
    const std::vector<std::uint64_t> ns = {3, 5, 7, 9};
    std::vector<double> x(ns.begin(), ns.end()), lone, eager, writes;
    bool gossip_exact = true;
    for (auto n : ns) {
        auto ls = builtin_scenario("lone_snapshot");
        ls.sim.n = n;
        ls.delta = kLargeDelta;
        auto a = run_scenario(ls);
        auto es = ls;
        es.delta = 0;
        auto b = run_scenario(es);
        auto lw = builtin_scenario("lone_write");
        lw.sim.n = n;
        auto c = run_scenario(lw);
        for (const auto* r : {&a, &b, &c}) {
            if (r->status != "complete" || !r->verdict.ok)
                o.pass = false;
            if (r->gossip_pairs_min != n * (n - 1) || r->gossip_pairs_max != n * (n - 1))
                gossip_exact = false;
        }
        lone.push_back(a.msgs_per_snapshot);
        eager.push_back(b.msgs_per_snapshot);
        writes.push_back(c.msgs_per_write);
    }
    double s_lone = loglog_slope(x, lone), s_eager = loglog_slope(x, eager),
           s_write = loglog_slope(x, writes);
    o.pass = o.pass && gossip_exact && s_lone <= kLinearSlope && s_eager >= kQuadraticSlope &&
             s_write <= kLinearSlope;
    o.detail = fmt("snapshot slope %.3f at delta %llu (<= %.1f), %.3f at delta 0 (>= %.1f), "
                   "write slope %.3f (<= %.1f), gossip pairs per cycle %s n(n-1)",
                   s_lone, (unsigned long long)kLargeDelta, kLinearSlope, s_eager,
                   kQuadraticSlope, s_write, kLinearSlope, gossip_exact ? "==" : "!=");
    return o;
}

Outcome criterion7()
{
    Outcome o;
    std::size_t worst = SIZE_MAX, phases = 0;
    for (std::uint64_t seed = 1; seed <= kBatchSeeds; ++seed) {
        auto s = builtin_scenario("steady_writer");
        s.delta = kBatchDelta;
        s.sim.seed = seed;
        auto r = run_scenario(s);
        phases += r.blocking_phases;
        if (r.status != "complete")
            o.pass = false;
        for (auto w : r.writes_between_phases) {
            worst = std::min(worst, w);
            if (w < kBatchDelta) {
                o.pass = false;
                o.detail += fmt("[seed %llu: %zu writes] ", (unsigned long long)seed, w);
            }
        }
    }
    if (worst == SIZE_MAX) {
        o.pass = false;
        o.detail += "no consecutive blocking phases observed";
    } else {
        o.detail += fmt("%zu blocking phases, fewest writes between two of them %zu (need >= %llu)",
                        phases, worst, (unsigned long long)kBatchDelta);
    }
    return o;
}

Outcome criterion8()
{
    Outcome o;
    std::size_t total = 0;
    for (auto alg : {Algorithm::NbSelfStab, Algorithm::AtSelfStab}) {
        Scenario s;
        s.name = "reset";
        s.algorithm = alg;
        s.delta = 4;
        s.sim.n = 5;
        s.sim.seed = 3;
        s.audit = false;
        s.reset_enabled = true;
        s.reset.maxint = kMaxInt;
        s.workload.loops.push_back({1, OpKind::Write, kMaxInt + 100, 0});
        s.workload.loops.push_back({2, OpKind::Snapshot, 40, 50});
        s.workload.loops.push_back({3, OpKind::Write, 60, 20});
        s.step_budget = 2'000'000;
        auto r = run_scenario(s);
        total += r.resets;
        bool ok = r.status == "complete" && r.resets >= 1 && r.verdict.ok;
        for (const auto& c : r.reset_checks)
            ok = ok && c.indices_zero && c.values_preserved && c.aborted <= c.busy_while_frozen;
        o.pass = o.pass && ok;
        o.detail += fmt("%s: %zu resets, %zu aborted, linearizable %s; ", to_string(alg), r.resets,
                        r.aborts, r.verdict.ok ? "yes" : "no");
    }
    o.detail += fmt("maxint %llu", (unsigned long long)kMaxInt);
    return o;
}

Outcome criterion9()
{
    Outcome o;
    std::mt19937_64 rng(0xD37E);
    std::size_t same = 0;
    for (std::size_t t = 0; t < kDeterminismTrials; ++t) {
        auto s = closure_trial(rng() % 100000);
        s.sim.seed = rng();
        auto a = to_json(run_scenario(s)).dump();
        auto b = to_json(run_scenario(s)).dump();
        if (a == b)
            ++same;
        else
            o.pass = false;
    }
    o.detail = fmt("%zu/%zu reruns byte-identical", same, kDeterminismTrials);
    return o;
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> all = {
        {"convergence", criterion1},     {"closure", criterion2},   {"baseline", criterion3},
        {"starvation", criterion4},      {"termination", criterion5},
        {"messages", criterion6},        {"batching", criterion7},  {"reset", criterion8},
        {"determinism", criterion9}};
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i)
        wanted.insert(std::atoi(argv[i]));
    bool ok = true;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (!wanted.empty() && !wanted.count(static_cast<int>(i + 1)))
            continue;
        auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = all[i].second();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %zu (%s): %s [%.1f s]\n", r.pass ? "PASS" : "FAIL", i + 1,
                    all[i].first, r.detail.c_str(), secs);
        std::fflush(stdout);
        ok = ok && r.pass;
    }
    return ok ? 0 : 1;
}
