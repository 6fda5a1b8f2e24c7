#include "stabsnap/harness.hpp"

#include "stabsnap/snapshot_at.hpp"
#include "stabsnap/snapshot_nb.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace stabsnap {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where)
{
    if (!j.is_object())
        throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [k, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            ok = ok || k == a;
        if (!ok)
            throw ConfigError(std::string("unknown key '") + k + "' in " + where);
    }
}

OpKind op_from_string(const std::string& s)
{
    if (s == "write")
        return OpKind::Write;
    if (s == "snapshot")
        return OpKind::Snapshot;
    throw ConfigError("unknown operation: " + s);
}

class Fnv {
public:
    void mix(std::uint64_t x)
    {
        for (int i = 0; i < 8; ++i) {
            h_ ^= (x >> (8 * i)) & 0xff;
            h_ *= 1099511628211ull;
        }
    }
    void mix(const Value& v)
    {
        mix(v.bytes.size());
        for (auto b : v.bytes) {
            h_ ^= b;
            h_ *= 1099511628211ull;
        }
    }
    std::string hex() const
    {
        std::ostringstream os;
        os << std::hex << std::setw(16) << std::setfill('0') << h_;
        return os.str();
    }

private:
    std::uint64_t h_ = 1469598103934665603ull;
};

} // namespace

const char* to_string(Algorithm a)
{
    switch (a) {
    case Algorithm::NbSelfStab:
        return "nb_selfstab";
    case Algorithm::NbBaseline:
        return "nb_baseline";
    case Algorithm::AtSelfStab:
        return "at_selfstab";
    }
    return "?";
}

Algorithm algorithm_from_string(const std::string& s)
{
    if (s == "nb_selfstab")
        return Algorithm::NbSelfStab;
    if (s == "nb_baseline")
        return Algorithm::NbBaseline;
    if (s == "at_selfstab")
        return Algorithm::AtSelfStab;
    throw ConfigError("unknown algorithm: " + s);
}

std::vector<std::unique_ptr<Node>> make_nodes(Algorithm a, std::size_t n, std::uint64_t delta)
{
    std::vector<std::unique_ptr<Node>> nodes;
    for (NodeId i = 0; i < n; ++i) {
        switch (a) {
        case Algorithm::NbSelfStab:
            nodes.push_back(std::make_unique<SnapshotNBNode>(i, n, true));
            break;
        case Algorithm::NbBaseline:
            nodes.push_back(std::make_unique<SnapshotNBNode>(i, n, false));
            break;
        case Algorithm::AtSelfStab:
            nodes.push_back(std::make_unique<SnapshotATNode>(i, n, delta));
            break;
        }
    }
    return nodes;
}

Value workload_value(NodeId node, std::uint64_t counter, std::size_t bytes)
{
    std::vector<std::uint8_t> b(std::max<std::size_t>(bytes, 8), 0);
    b[0] = 0x57;
    b[1] = static_cast<std::uint8_t>(node & 0xff);
    for (int k = 0; k < 6; ++k)
        b[2 + k] = static_cast<std::uint8_t>((counter >> (8 * (5 - k))) & 0xff);
    return Value(std::move(b));
}

// ---- scenario files --------------------------------------------------------

Scenario scenario_from_json(const nlohmann::json& j)
{
    check_keys(j,
               {"name", "algorithm", "n", "delta", "seed", "capacity", "policy", "gossip_share",
                "tick_share", "faults", "transient", "starvation", "workload", "step_budget",
                "min_cycles", "value_bytes", "stable_cycles", "audit", "check", "keep_trace",
                "reset"},
               "scenario");
    Scenario s;
    try {
        s.name = j.value("name", s.name);
        s.algorithm = algorithm_from_string(j.value("algorithm", std::string("nb_selfstab")));
        s.sim.n = j.value("n", s.sim.n);
        s.delta = j.value("delta", s.delta);
        s.sim.seed = j.value("seed", s.sim.seed);
        s.sim.capacity = j.value("capacity", s.sim.capacity);
        auto policy = j.value("policy", std::string("random"));
        if (policy == "random")
            s.sim.policy = Policy::Random;
        else if (policy == "round_robin")
            s.sim.policy = Policy::RoundRobin;
        else
            throw ConfigError("unknown policy: " + policy);
        s.sim.gossip_share = j.value("gossip_share", s.sim.gossip_share);
        s.sim.tick_share = j.value("tick_share", s.sim.tick_share);

        if (j.contains("faults")) {
            const auto& f = j["faults"];
            check_keys(f, {"drop", "dup", "reorder", "fairness_cap", "crashes", "allow_quorum_loss"},
                       "faults");
            s.sim.faults.drop_rate = f.value("drop", 0.0);
            s.sim.faults.dup_rate = f.value("dup", 0.0);
            s.sim.faults.reorder = f.value("reorder", false);
            s.sim.faults.fairness_cap = f.value("fairness_cap", s.sim.faults.fairness_cap);
            s.sim.faults.allow_quorum_loss = f.value("allow_quorum_loss", false);
            if (f.contains("crashes"))
                for (const auto& c : f["crashes"]) {
                    check_keys(c, {"node", "at", "resume"}, "crash");
                    s.sim.faults.crashes.push_back({c.at("node").get<NodeId>(),
                                                    c.value("at", std::uint64_t{0}),
                                                    c.value("resume", false)});
                }
        }
        if (j.contains("transient")) {
            const auto& t = j["transient"];
            check_keys(t, {"random", "seed", "assignments", "forged"}, "transient");
            TransientRecipe r;
            r.seed = t.value("seed", s.sim.seed);
            if (t.contains("random")) {
                const auto& rr = t["random"];
                check_keys(rr, {"max_index", "channel_fill", "max_garbage", "forge_tasks"},
                           "transient.random");
                RandomCorruption rc;
                rc.max_index = rr.value("max_index", rc.max_index);
                rc.channel_fill = rr.value("channel_fill", rc.channel_fill);
                rc.max_garbage = rr.value("max_garbage", rc.max_garbage);
                rc.forge_tasks = rr.value("forge_tasks", rc.forge_tasks);
                r.random = rc;
            }
            if (t.contains("assignments"))
                for (const auto& a : t["assignments"]) {
                    check_keys(a, {"path", "value"}, "assignment");
                    r.assignments.push_back({a.at("path").get<std::string>(), a.at("value")});
                }
            if (t.contains("forged"))
                for (const auto& e : t["forged"])
                    r.forged.push_back(envelope_from_json(e));
            s.transient = r;
        }
        if (j.contains("starvation")) {
            const auto& st = j["starvation"];
            check_keys(st, {"snapshotter", "writer"}, "starvation");
            s.starvation = StarvationPlan{st.value("snapshotter", NodeId{0}),
                                          st.value("writer", NodeId{1})};
        }
        if (j.contains("workload")) {
            const auto& w = j["workload"];
            check_keys(w, {"after_stabilization", "start", "scripts", "loops"}, "workload");
            s.workload.after_stabilization = w.value("after_stabilization", false);
            s.workload.start_data_step = w.value("start", std::uint64_t{0});
            if (w.contains("scripts"))
                for (const auto& sc : w["scripts"]) {
                    check_keys(sc, {"node", "ops"}, "script");
                    NodeScript ns;
                    ns.node = sc.at("node").get<NodeId>();
                    for (const auto& op : sc.at("ops")) {
                        check_keys(op, {"op", "at"}, "scripted op");
                        ns.ops.push_back({op_from_string(op.at("op").get<std::string>()),
                                          op.value("at", std::uint64_t{0})});
                    }
                    s.workload.scripts.push_back(std::move(ns));
                }
            if (w.contains("loops"))
                for (const auto& l : w["loops"]) {
                    check_keys(l, {"node", "op", "count", "think"}, "loop");
                    s.workload.loops.push_back({l.at("node").get<NodeId>(),
                                                op_from_string(l.at("op").get<std::string>()),
                                                l.value("count", std::uint64_t{0}),
                                                l.value("think", std::uint64_t{0})});
                }
        }
        s.step_budget = j.value("step_budget", s.step_budget);
        s.min_cycles = j.value("min_cycles", s.min_cycles);
        s.value_bytes = j.value("value_bytes", s.value_bytes);
        s.stable_cycles = j.value("stable_cycles", s.stable_cycles);
        s.audit = j.value("audit", s.audit);
        s.check = j.value("check", s.check);
        s.keep_trace = j.value("keep_trace", s.keep_trace);
        if (j.contains("reset")) {
            const auto& r = j["reset"];
            check_keys(r, {"enabled", "maxint", "abort_after_cycles", "settle_cycles"}, "reset");
            s.reset_enabled = r.value("enabled", true);
            s.reset.maxint = r.value("maxint", s.reset.maxint);
            s.reset.abort_after_cycles = r.value("abort_after_cycles", s.reset.abort_after_cycles);
            s.reset.settle_cycles = r.value("settle_cycles", s.reset.settle_cycles);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scenario: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const Scenario& s)
{
    nlohmann::json j;
    j["name"] = s.name;
    j["algorithm"] = to_string(s.algorithm);
    j["n"] = s.sim.n;
    j["delta"] = s.delta;
    j["seed"] = s.sim.seed;
    j["capacity"] = s.sim.capacity;
    j["policy"] = s.sim.policy == Policy::Random ? "random" : "round_robin";
    j["gossip_share"] = s.sim.gossip_share;
    j["tick_share"] = s.sim.tick_share;
    const auto& f = s.sim.faults;
    j["faults"] = {{"drop", f.drop_rate},
                   {"dup", f.dup_rate},
                   {"reorder", f.reorder},
                   {"fairness_cap", f.fairness_cap},
                   {"allow_quorum_loss", f.allow_quorum_loss},
                   {"crashes", nlohmann::json::array()}};
    for (const auto& c : f.crashes)
        j["faults"]["crashes"].push_back({{"node", c.node}, {"at", c.at_data_step}, {"resume", c.resume}});
    if (s.transient) {
        nlohmann::json t;
        t["seed"] = s.transient->seed;
        if (s.transient->random) {
            const auto& r = *s.transient->random;
            t["random"] = {{"max_index", r.max_index},
                           {"channel_fill", r.channel_fill},
                           {"max_garbage", r.max_garbage},
                           {"forge_tasks", r.forge_tasks}};
        }
        if (!s.transient->assignments.empty()) {
            t["assignments"] = nlohmann::json::array();
            for (const auto& a : s.transient->assignments)
                t["assignments"].push_back({{"path", a.path}, {"value", a.value}});
        }
        if (!s.transient->forged.empty()) {
            t["forged"] = nlohmann::json::array();
            for (const auto& e : s.transient->forged)
                t["forged"].push_back(to_json(e));
        }
        j["transient"] = t;
    }
    if (s.starvation)
        j["starvation"] = {{"snapshotter", s.starvation->snapshotter},
                           {"writer", s.starvation->writer}};
    nlohmann::json w;
    w["after_stabilization"] = s.workload.after_stabilization;
    w["start"] = s.workload.start_data_step;
    w["scripts"] = nlohmann::json::array();
    for (const auto& sc : s.workload.scripts) {
        nlohmann::json ops = nlohmann::json::array();
        for (const auto& op : sc.ops)
            ops.push_back({{"op", to_string(op.kind)}, {"at", op.not_before}});
        w["scripts"].push_back({{"node", sc.node}, {"ops", ops}});
    }
    w["loops"] = nlohmann::json::array();
    for (const auto& l : s.workload.loops)
        w["loops"].push_back(
            {{"node", l.node}, {"op", to_string(l.kind)}, {"count", l.count}, {"think", l.think}});
    j["workload"] = w;
    j["step_budget"] = s.step_budget;
    j["min_cycles"] = s.min_cycles;
    j["value_bytes"] = s.value_bytes;
    j["stable_cycles"] = s.stable_cycles;
    j["audit"] = s.audit;
    j["check"] = s.check;
    j["keep_trace"] = s.keep_trace;
    if (s.reset_enabled)
        j["reset"] = {{"enabled", true},
                      {"maxint", s.reset.maxint},
                      {"abort_after_cycles", s.reset.abort_after_cycles},
                      {"settle_cycles", s.reset.settle_cycles}};
    return j;
}

std::vector<std::string> builtin_names()
{
    return {"starvation", "lone_snapshot", "lone_write", "steady_writer", "convergence"};
}

Scenario builtin_scenario(const std::string& name)
{
    Scenario s;
    s.name = name;
    if (name == "starvation") {
        s.algorithm = Algorithm::NbSelfStab;
        s.sim.n = 3;
        s.starvation = StarvationPlan{0, 1};
        s.workload.scripts.push_back({0, {{OpKind::Snapshot, 0}}});
        s.workload.loops.push_back({1, OpKind::Write, 150, 0});
        s.audit = false;
    } else if (name == "lone_snapshot") {
        s.algorithm = Algorithm::AtSelfStab;
        s.sim.n = 5;
        s.delta = 1'000'000;
        s.workload.loops.push_back({0, OpKind::Snapshot, 10, 400});
        s.audit = false;
    } else if (name == "lone_write") {
        s.algorithm = Algorithm::AtSelfStab;
        s.sim.n = 5;
        s.delta = 1'000'000;
        s.workload.loops.push_back({1, OpKind::Write, 10, 400});
        s.audit = false;
    } else if (name == "steady_writer") {
        s.algorithm = Algorithm::AtSelfStab;
        s.sim.n = 5;
        s.delta = 4;
        s.workload.loops.push_back({1, OpKind::Write, 0, 0});
        s.workload.loops.push_back({0, OpKind::Snapshot, 20, 0});
        s.audit = false;
    } else if (name == "convergence") {
        s.algorithm = Algorithm::NbSelfStab;
        s.sim.n = 5;
        s.transient = TransientRecipe{};
        s.transient->random = RandomCorruption{};
        s.transient->seed = s.sim.seed;
        s.min_cycles = 10;
        s.workload.after_stabilization = true;
        s.workload.loops.push_back({1, OpKind::Write, 3, 0});
        s.workload.loops.push_back({2, OpKind::Snapshot, 3, 0});
    } else {
        throw ConfigError("unknown built-in scenario: " + name);
    }
    return s;
}

// ---- running ---------------------------------------------------------------

bool Report::passed() const
{
    return status == "complete" && (!checked || verdict.ok) &&
           (!audited || audit_violations_at_end == 0);
}

namespace {

struct Driver {
    struct PerNode {
        std::size_t script_pos = 0;
        const NodeScript* script = nullptr;
        const ClosedLoop* loop = nullptr;
        std::uint64_t loop_done = 0;
        std::uint64_t next_allowed = 0;
        std::uint64_t counter = 0;
    };

    const Scenario& sc;
    std::vector<PerNode> nodes;
    bool admitted = false;

    Driver(const Scenario& s) : sc(s), nodes(s.sim.n)
    {
        std::set<NodeId> used;
        for (const auto& ns : sc.workload.scripts) {
            if (ns.node >= sc.sim.n || !used.insert(ns.node).second)
                throw ConfigError("workload script node invalid or duplicated");
            nodes[ns.node].script = &ns;
        }
        for (const auto& l : sc.workload.loops) {
            if (l.node >= sc.sim.n || !used.insert(l.node).second)
                throw ConfigError("workload loop node invalid or duplicated");
            nodes[l.node].loop = &l;
        }
    }

    std::optional<OpKind> next(NodeId i, std::uint64_t data_step) const
    {
        const auto& p = nodes[i];
        if (data_step < p.next_allowed)
            return std::nullopt;
        if (p.script) {
            if (p.script_pos >= p.script->ops.size())
                return std::nullopt;
            const auto& op = p.script->ops[p.script_pos];
            if (data_step < op.not_before)
                return std::nullopt;
            return op.kind;
        }
        if (p.loop && (p.loop->count == 0 || p.loop_done < p.loop->count))
            return p.loop->kind;
        return std::nullopt;
    }

    void started(NodeId i)
    {
        auto& p = nodes[i];
        if (p.script)
            ++p.script_pos;
        else if (p.loop)
            ++p.loop_done;
    }

    void responded(NodeId i, std::uint64_t data_step)
    {
        auto& p = nodes[i];
        p.next_allowed = data_step + (p.loop ? p.loop->think : 0);
    }

    bool exhausted(NodeId i) const
    {
        const auto& p = nodes[i];
        if (p.script)
            return p.script_pos >= p.script->ops.size();
        if (p.loop)
            return p.loop->count != 0 && p.loop_done >= p.loop->count;
        return true;
    }

    bool unbounded(NodeId i) const { return nodes[i].loop && nodes[i].loop->count == 0; }
};

} // namespace

Report run_scenario(const Scenario& sc)
{
    const auto n = sc.sim.n;
    if (n == 0)
        throw ConfigError("n must be positive");
    if (sc.reset_enabled && sc.algorithm == Algorithm::NbBaseline)
        throw ConfigError("index reset needs a gossiping algorithm");
    if (sc.starvation && (sc.starvation->snapshotter >= n || sc.starvation->writer >= n))
        throw ConfigError("starvation plan names unknown node");

    SimConfig cfg = sc.sim;
    World w(cfg, make_nodes(sc.algorithm, n, sc.delta));
    Driver driver(sc);

    Report rep;
    rep.scenario = sc.name;
    rep.seed = cfg.seed;
    rep.algorithm = to_string(sc.algorithm);
    rep.n = n;
    rep.delta = sc.delta;
    rep.history = History(n);

    CycleDetector cyc(n, sc.algorithm != Algorithm::NbBaseline);
    Fnv digest;
    std::vector<bool> gossip_pair(n * n, false);
    std::size_t gossip_pairs = 0;
    std::vector<std::size_t> pair_counts;
    std::vector<std::optional<std::size_t>> open_op(n);
    std::size_t writes_completed = 0, snaps_completed = 0;

    const bool track_phases = sc.algorithm == Algorithm::AtSelfStab;
    std::vector<bool> writer(n, false);
    for (const auto& l : sc.workload.loops)
        if (l.kind == OpKind::Write)
            writer[l.node] = true;
    std::vector<bool> in_phase(n, false), had_phase(n, false);
    std::vector<std::size_t> writes_since(n, 0);
    std::vector<std::uint64_t> writes_done_by(n, 0), phase_op(n, 0);

    w.add_listener([&](const TraceRecord& r) {
        digest.mix(static_cast<std::uint64_t>(r.kind));
        digest.mix(r.step);
        digest.mix(r.data_step);
        digest.mix(r.node);
        digest.mix(r.peer);
        digest.mix(static_cast<std::uint64_t>(r.msg));
        digest.mix(r.tag);
        digest.mix(r.seq);
        if (r.kind == TraceKind::Invoke)
            digest.mix(r.value);
        if (r.kind == TraceKind::Respond) {
            digest.mix(r.ts);
            for (const auto& e : r.result.entries()) {
                digest.mix(e.ts);
                if (e.value)
                    digest.mix(*e.value);
            }
        }
        if (sc.keep_trace)
            rep.trace.push_back(r);

        auto before = cyc.cycles();
        cyc.on(r);
        if (cyc.cycles() != before) {
            pair_counts.push_back(gossip_pairs);
            std::fill(gossip_pair.begin(), gossip_pair.end(), false);
            gossip_pairs = 0;
        }

        switch (r.kind) {
        case TraceKind::Send:
            if (r.msg == MsgKind::Gossip && !gossip_pair[r.node * n + r.peer]) {
                gossip_pair[r.node * n + r.peer] = true;
                ++gossip_pairs;
            }
            break;
        case TraceKind::Invoke:
            rep.history.on_trace(r);
            open_op[r.node] = rep.ops.size();
            rep.ops.push_back({r.node, r.op, r.step, std::nullopt, 0});
            break;
        case TraceKind::Respond: {
            rep.history.on_trace(r);
            auto& op = rep.ops.at(*open_op[r.node]);
            open_op[r.node].reset();
            op.respond_step = r.step;
            op.latency_cycles = cyc.cycle_of(r.step) - cyc.cycle_of(op.invoke_step) + 1;
            if (op.kind == OpKind::Write) {
                ++writes_completed;
                ++writes_since[r.node];
                ++writes_done_by[r.node];
                rep.max_write_cycles = std::max(rep.max_write_cycles, op.latency_cycles);
            } else {
                ++snaps_completed;
                rep.max_snapshot_cycles = std::max(rep.max_snapshot_cycles, op.latency_cycles);
            }
            driver.responded(r.node, r.data_step);
            break;
        }
        case TraceKind::Abort:
            rep.history.on_trace(r);
            open_op[r.node].reset();
            break;
        default:
            break;
        }
    });

    std::unique_ptr<ResetController> reset;
    if (sc.reset_enabled) {
        reset = std::make_unique<ResetController>(w, sc.reset);
        reset->attach();
    }
    if (sc.transient)
        w.inject_transient(*sc.transient);

    const bool audit = sc.audit;
    rep.audited = audit;
    std::optional<std::uint64_t> last_dirty;
    std::optional<std::size_t> clean_since_cycle;
    bool stable = !sc.workload.after_stabilization;
    if (audit && !stable && !audit_consistency(w).empty())
        last_dirty = 0;

    w.set_pre_tick([&](World& world, NodeId i) {
        if (!stable || world.data_steps() < sc.workload.start_data_step)
            return;
        if (world.node(i).busy())
            return;
        auto kind = driver.next(i, world.data_steps());
        if (!kind)
            return;
        if (!rep.workload_start_step) {
            rep.workload_start_step = world.steps();
            rep.ts_collisions_at_workload_start = find_ts_collisions(world).size();
        }
        auto& p = driver.nodes[i];
        OpRequest req{*kind, {}};
        if (*kind == OpKind::Write)
            req.value = workload_value(i, p.counter++, sc.value_bytes);
        if (world.invoke(i, std::move(req)))
            driver.started(i);
    });

    if (sc.starvation) {
        struct Phase {
            int phase = 0; // 0 idle, 1 let one write complete, 2 let the snapshot proceed
            std::uint64_t ssn = 0;
            std::uint64_t writes_at = 0;
        };
        auto st = std::make_shared<Phase>();
        const auto plan = *sc.starvation;
        w.set_filter([&, st, plan](const World& world, std::vector<SchedEvent> ev) {
            const auto& snap = world.node(plan.snapshotter);
            bool writer_left = !driver.exhausted(plan.writer) || world.node(plan.writer).busy();
            if (!snap.busy() || !writer_left) {
                st->phase = 0;
                return std::vector<SchedEvent>{};
            }
            const auto ssn = snap.vars().ssn;
            if (st->phase != 1 && ssn != st->ssn) {
                st->phase = 1;
                st->ssn = ssn;
                st->writes_at = writes_done_by[plan.writer];
            } else if (st->phase == 1 && writes_done_by[plan.writer] > st->writes_at) {
                st->phase = 2;
            }
            std::vector<SchedEvent> out;
            for (const auto& e : ev) {
                if (st->phase == 1) {
                    if (e.type == SchedEvent::Type::Tick) {
                        if (e.node != plan.snapshotter)
                            out.push_back(e);
                    } else {
                        auto k = world.data_channel(e.src, e.node).at(0).kind;
                        if (k == MsgKind::Write || k == MsgKind::WriteAck)
                            out.push_back(e);
                    }
                } else if (!(e.type == SchedEvent::Type::Tick && e.node == plan.writer)) {
                    out.push_back(e);
                }
            }
            return out;
        });
    }

    auto finite_done = [&] {
        for (NodeId i = 0; i < n; ++i) {
            if (driver.unbounded(i) || w.crashed(i))
                continue;
            if (!driver.exhausted(i) || w.node(i).busy())
                return false;
        }
        return stable;
    };

    std::size_t pending_busy = 0, reset_aborts = 0;

    rep.status = "step_budget";
    while (w.steps() < sc.step_budget) {
        if (!w.step()) {
            rep.status = "deadlock";
            break;
        }
        if (audit) {
            if (!audit_consistency(w).empty()) {
                last_dirty = w.steps();
                clean_since_cycle.reset();
            } else if (!clean_since_cycle) {
                clean_since_cycle = cyc.cycles();
            }
        }
        if (!stable) {
            if (!audit)
                stable = true;
            else if (clean_since_cycle && cyc.cycles() >= *clean_since_cycle + sc.stable_cycles)
                stable = true;
        }
        if (reset) {
            std::optional<RegisterArray> latest;
            if (reset->in_progress()) {
                std::size_t busy = 0;
                for (NodeId i = 0; i < n; ++i)
                    busy += w.node(i).busy() ? 1 : 0;
                pending_busy = std::max(pending_busy, busy);
                latest = RegisterArray(n);
                for (NodeId i = 0; i < n; ++i)
                    merge_into(*latest, w.node(i).vars().reg);
            }
            auto before = reset->resets();
            auto aborts_before = reset->aborts();
            reset->after_step(cyc);
            if (reset->resets() != before && latest) {
                ResetCheck rc;
                rc.indices_zero = true;
                rc.values_preserved = true;
                for (NodeId i = 0; i < n; ++i) {
                    const auto& v = w.node(i).vars();
                    rc.indices_zero = rc.indices_zero && v.ts == 0 && v.ssn == 0 && v.sns == 0;
                    for (NodeId k = 0; k < n; ++k) {
                        rc.indices_zero = rc.indices_zero && v.reg[k].ts == 0;
                        if (k < v.pnd.size())
                            rc.indices_zero = rc.indices_zero && v.pnd[k].sns == 0 &&
                                              !v.pnd[k].vc && !v.pnd[k].fnl;
                        rc.values_preserved =
                            rc.values_preserved && v.reg[k].value == (*latest)[k].value;
                    }
                }
                rc.busy_while_frozen = pending_busy;
                rc.aborted = reset_aborts + (reset->aborts() - aborts_before);
                rep.reset_checks.push_back(rc);
                pending_busy = 0;
                reset_aborts = 0;
            } else {
                reset_aborts += reset->aborts() - aborts_before;
            }
        }
        if (track_phases) {
            for (NodeId i = 0; i < n; ++i) {
                if (!writer[i])
                    continue;
                const auto& node = static_cast<const SnapshotATNode&>(w.node(i));
                bool now = node.in_base_snapshot();
                // Snapshot rounds run inside one write form one phase.
                if (now && !in_phase[i] && !(had_phase[i] && phase_op[i] == writes_done_by[i])) {
                    ++rep.blocking_phases;
                    if (had_phase[i])
                        rep.writes_between_phases.push_back(writes_since[i]);
                    had_phase[i] = true;
                    phase_op[i] = writes_done_by[i];
                } else if (!now && in_phase[i]) {
                    writes_since[i] = 0;
                }
                in_phase[i] = now;
            }
        }
        if (finite_done() && cyc.cycles() >= sc.min_cycles) {
            rep.status = "complete";
            break;
        }
    }

    rep.steps = w.steps();
    rep.data_steps = w.data_steps();
    rep.cycles = cyc.cycles();
    rep.cycle_boundaries = cyc.boundaries();
    if (audit) {
        auto v = audit_consistency(w);
        rep.audit_violations_at_end = v.size();
        if (v.size() > 8)
            v.resize(8);
        rep.final_violations = std::move(v);
        std::uint64_t s = last_dirty ? *last_dirty : 0;
        rep.stabilization_step = s;
        rep.stabilization_cycle = s == 0 ? 0 : cyc.cycle_of(s) + 1;
    }
    rep.ts_collisions_at_end = find_ts_collisions(w).size();
    rep.stats = w.stats();
    const auto& lg = rep.stats.logical;
    auto at = [&](MsgKind k) { return static_cast<double>(lg[static_cast<std::size_t>(k)]); };
    if (writes_completed)
        rep.msgs_per_write = (at(MsgKind::Write) + at(MsgKind::WriteAck)) / writes_completed;
    if (snaps_completed)
        rep.msgs_per_snapshot = (at(MsgKind::Snapshot) + at(MsgKind::SnapshotAck) +
                                 at(MsgKind::Save) + at(MsgKind::SaveAck)) /
                                snaps_completed;
    if (!pair_counts.empty()) {
        rep.gossip_pairs_min = *std::min_element(pair_counts.begin(), pair_counts.end());
        rep.gossip_pairs_max = *std::max_element(pair_counts.begin(), pair_counts.end());
    }
    rep.ops_invoked = rep.ops.size();
    rep.ops_completed = writes_completed + snaps_completed;
    if (reset) {
        rep.resets = reset->resets();
        rep.aborts = reset->aborts();
    }
    if (sc.check) {
        rep.checked = true;
        rep.verdict = check_linearizable(rep.history);
    }
    rep.trace_digest = digest.hex();
    return rep;
}

std::vector<Report> sweep(const Scenario& base, const std::string& axis,
                          const std::vector<std::uint64_t>& values)
{
    std::vector<Report> out;
    for (auto v : values) {
        Scenario s = base;
        if (axis == "n")
            s.sim.n = static_cast<std::size_t>(v);
        else if (axis == "delta")
            s.delta = v;
        else if (axis == "seed")
            s.sim.seed = v;
        else
            throw ConfigError("unknown sweep axis: " + axis);
        out.push_back(run_scenario(s));
    }
    return out;
}

// ---- output ----------------------------------------------------------------

nlohmann::json to_json(const Report& r)
{
    nlohmann::json j;
    j["schema"] = 1;
    j["scenario"] = r.scenario;
    j["seed"] = r.seed;
    j["algorithm"] = r.algorithm;
    j["n"] = r.n;
    j["delta"] = r.delta;
    j["status"] = r.status;
    j["passed"] = r.passed();
    j["steps"] = r.steps;
    j["data_steps"] = r.data_steps;
    j["cycles"] = r.cycles;
    j["audited"] = r.audited;
    j["stabilization_step"] = r.stabilization_step ? nlohmann::json(*r.stabilization_step) : nullptr;
    j["stabilization_cycle"] =
        r.stabilization_cycle ? nlohmann::json(*r.stabilization_cycle) : nullptr;
    j["audit_violations_at_end"] = r.audit_violations_at_end;
    j["ts_collisions_at_workload_start"] = r.ts_collisions_at_workload_start;
    j["ts_collisions_at_end"] = r.ts_collisions_at_end;
    j["final_violations"] = nlohmann::json::array();
    for (const auto& v : r.final_violations)
        j["final_violations"].push_back({{"node", v.node}, {"rule", v.rule}, {"detail", v.detail}});
    j["ops_invoked"] = r.ops_invoked;
    j["ops_completed"] = r.ops_completed;
    j["max_write_cycles"] = r.max_write_cycles;
    j["max_snapshot_cycles"] = r.max_snapshot_cycles;
    j["msgs_per_write"] = r.msgs_per_write;
    j["msgs_per_snapshot"] = r.msgs_per_snapshot;
    j["gossip_pairs_min"] = r.gossip_pairs_min;
    j["gossip_pairs_max"] = r.gossip_pairs_max;
    nlohmann::json logical, sent;
    for (std::size_t k = 0; k < kMsgKinds; ++k) {
        logical[to_string(static_cast<MsgKind>(k))] = r.stats.logical[k];
        sent[to_string(static_cast<MsgKind>(k))] = r.stats.sent[k];
    }
    j["logical_messages"] = logical;
    j["envelopes_sent"] = sent;
    j["checked"] = r.checked;
    j["linearizable"] = r.verdict.ok;
    j["certificate"] = r.verdict.certificate;
    j["resets"] = r.resets;
    j["aborts"] = r.aborts;
    j["reset_checks"] = nlohmann::json::array();
    for (const auto& c : r.reset_checks)
        j["reset_checks"].push_back({{"indices_zero", c.indices_zero},
                                     {"values_preserved", c.values_preserved},
                                     {"busy_while_frozen", c.busy_while_frozen},
                                     {"aborted", c.aborted}});
    j["blocking_phases"] = r.blocking_phases;
    j["writes_between_phases"] = r.writes_between_phases;
    j["trace_digest"] = r.trace_digest;
    nlohmann::json ops = nlohmann::json::array();
    for (const auto& o : r.ops)
        ops.push_back({{"node", o.node},
                       {"op", to_string(o.kind)},
                       {"invoke", o.invoke_step},
                       {"respond", o.respond_step ? nlohmann::json(*o.respond_step) : nullptr},
                       {"cycles", o.latency_cycles}});
    j["ops"] = ops;
    return j;
}

std::string csv_header()
{
    return "schema,scenario,seed,algorithm,n,delta,status,passed,steps,data_steps,cycles,"
           "stabilization_cycle,ops_invoked,ops_completed,max_write_cycles,max_snapshot_cycles,"
           "msgs_per_write,msgs_per_snapshot,gossip_pairs_min,gossip_pairs_max,linearizable,"
           "resets,aborts,blocking_phases,min_writes_between_phases,trace_digest";
}

std::string to_csv_row(const Report& r)
{
    std::ostringstream os;
    os << 1 << ',' << r.scenario << ',' << r.seed << ',' << r.algorithm << ',' << r.n << ','
       << r.delta << ',' << r.status << ',' << (r.passed() ? 1 : 0) << ',' << r.steps << ','
       << r.data_steps << ',' << r.cycles << ',';
    if (r.stabilization_cycle)
        os << *r.stabilization_cycle;
    os << ',' << r.ops_invoked << ',' << r.ops_completed << ',' << r.max_write_cycles << ','
       << r.max_snapshot_cycles << ',' << r.msgs_per_write << ',' << r.msgs_per_snapshot << ','
       << r.gossip_pairs_min << ',' << r.gossip_pairs_max << ',' << (r.verdict.ok ? 1 : 0) << ','
       << r.resets << ',' << r.aborts << ',' << r.blocking_phases << ',';
    if (!r.writes_between_phases.empty())
        os << *std::min_element(r.writes_between_phases.begin(), r.writes_between_phases.end());
    os << ',' << r.trace_digest;
    return os.str();
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("loglog_slope needs two or more points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= x.size();
    my /= y.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = std::log(x[i]) - mx;
        num += dx * (std::log(y[i]) - my);
        den += dx * dx;
    }
    return num / den;
}

} // namespace stabsnap
