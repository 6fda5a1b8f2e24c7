#include "stabsnap/checker.hpp"

#include <algorithm>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <sstream>
#include <unordered_set>

namespace stabsnap {

namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();

std::vector<std::uint8_t> unhex(const std::string& s)
{
    nlohmann::json j = {{"v", s}, {"ts", 1}};
    return entry_from_json(j).value->bytes;
}

std::string describe(const LinModel& m, std::size_t x)
{
    const auto& op = m.ops[x];
    std::ostringstream os;
    if (op.kind == OpKind::Write) {
        os << (op.pre_history ? "prewrite" : "write") << "(p" << op.node << ", v" << op.rank
           << "=" << op.value.hex() << ")";
    } else {
        os << "snapshot(p" << op.node << ") -> [";
        for (std::size_t k = 0; k < op.ver.size(); ++k)
            os << (k ? " " : "") << op.ver[k];
        os << "]";
    }
    if (!op.pre_history) {
        os << " @[" << (op.inv - 2) / 2 << ",";
        if (op.resp == kInf)
            os << "pending";
        else
            os << (op.resp - 2) / 2;
        os << "]";
    }
    return os.str();
}

} // namespace

// ---- History ---------------------------------------------------------------

void History::record(HistoryEvent e)
{
    if (e.node >= n_)
        n_ = e.node + 1;
    n_ = std::max(n_, e.result.size());
    if (open_.size() < n_)
        open_.resize(n_);
    auto& slot = open_[e.node];
    switch (e.type) {
    case HistoryEvent::Type::Invoke:
        if (slot)
            throw std::logic_error("second invocation while an operation is open");
        slot = events_.size();
        break;
    case HistoryEvent::Type::Respond:
        if (!slot || events_[*slot].op != e.op)
            throw std::logic_error("response without matching invocation");
        slot.reset();
        break;
    case HistoryEvent::Type::Abort:
        if (!slot)
            throw std::logic_error("abort without open operation");
        e.op = events_[*slot].op;
        slot.reset();
        break;
    }
    events_.push_back(std::move(e));
}

void History::on_trace(const TraceRecord& r)
{
    HistoryEvent e;
    e.node = r.node;
    e.op = r.op;
    e.step = r.step;
    e.data_step = r.data_step;
    switch (r.kind) {
    case TraceKind::Invoke:
        e.type = HistoryEvent::Type::Invoke;
        e.value = r.value;
        break;
    case TraceKind::Respond:
        e.type = HistoryEvent::Type::Respond;
        e.ts = r.ts;
        e.result = r.result;
        break;
    case TraceKind::Abort:
        e.type = HistoryEvent::Type::Abort;
        break;
    default:
        return;
    }
    record(std::move(e));
}

std::vector<Operation> History::operations() const
{
    std::vector<Operation> ops;
    std::vector<std::optional<std::size_t>> open(n_);
    for (std::size_t i = 0; i < events_.size(); ++i) {
        const auto& e = events_[i];
        if (e.type == HistoryEvent::Type::Invoke) {
            Operation op;
            op.node = e.node;
            op.kind = e.op;
            op.value = e.value;
            op.invoke = i;
            open[e.node] = ops.size();
            ops.push_back(std::move(op));
        } else {
            auto& op = ops[*open[e.node]];
            if (e.type == HistoryEvent::Type::Respond) {
                op.respond = i;
                op.result = e.result;
            } else {
                op.aborted = true;
            }
            open[e.node].reset();
        }
    }
    return ops;
}

std::size_t History::completed() const
{
    return static_cast<std::size_t>(
        std::count_if(events_.begin(), events_.end(),
                      [](const HistoryEvent& e) { return e.type == HistoryEvent::Type::Respond; }));
}

nlohmann::json to_json(const HistoryEvent& e)
{
    nlohmann::json j;
    static const char* types[] = {"invoke", "respond", "abort"};
    j["type"] = types[static_cast<int>(e.type)];
    j["node"] = e.node;
    j["op"] = to_string(e.op);
    j["step"] = e.step;
    j["data_step"] = e.data_step;
    if (e.type == HistoryEvent::Type::Invoke && e.op == OpKind::Write)
        j["value"] = e.value.hex();
    if (e.type == HistoryEvent::Type::Respond) {
        if (e.op == OpKind::Write)
            j["ts"] = e.ts;
        else
            j["result"] = to_json(e.result);
    }
    return j;
}

HistoryEvent history_event_from_json(const nlohmann::json& j)
{
    HistoryEvent e;
    auto type = j.at("type").get<std::string>();
    if (type == "invoke")
        e.type = HistoryEvent::Type::Invoke;
    else if (type == "respond")
        e.type = HistoryEvent::Type::Respond;
    else if (type == "abort")
        e.type = HistoryEvent::Type::Abort;
    else
        throw std::invalid_argument("unknown history event type: " + type);
    e.node = j.at("node").get<NodeId>();
    auto op = j.at("op").get<std::string>();
    if (op != "write" && op != "snapshot")
        throw std::invalid_argument("unknown operation: " + op);
    e.op = op == "write" ? OpKind::Write : OpKind::Snapshot;
    e.step = j.value("step", std::uint64_t{0});
    e.data_step = j.value("data_step", std::uint64_t{0});
    if (j.contains("value"))
        e.value = Value(unhex(j["value"].get<std::string>()));
    e.ts = j.value("ts", Timestamp{0});
    if (j.contains("result"))
        e.result = array_from_json(j["result"]);
    return e;
}

void History::write_jsonl(std::ostream& os) const
{
    for (const auto& e : events_)
        os << to_json(e).dump() << '\n';
}

History History::read_jsonl(std::istream& is)
{
    History h;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        auto j = nlohmann::json::parse(line);
        // Full simulator traces are accepted too; only operation records count.
        if (j.contains("kind") && !j.contains("type")) {
            auto kind = j["kind"].get<std::string>();
            if (kind != "invoke" && kind != "respond" && kind != "abort")
                continue;
            j["type"] = kind;
            if (kind == "abort" && !j.contains("op"))
                j["op"] = "write";
        }
        h.record(history_event_from_json(j));
    }
    return h;
}

// ---- model -----------------------------------------------------------------

LinModel build_model(const History& h)
{
    LinModel m;
    m.n = h.n();
    const auto ops = h.operations();
    const auto n = m.n;
    auto t = [](std::size_t ev) { return static_cast<std::int64_t>(2 * ev + 2); };

    std::map<std::pair<NodeId, Value>, Timestamp> returned; // lowest ts seen per value
    std::map<std::pair<NodeId, Value>, std::set<Timestamp>> returned_ts;
    for (const auto& op : ops) {
        if (op.kind != OpKind::Snapshot || !op.respond)
            continue;
        if (op.result.size() != n) {
            m.error = "snapshot result has " + std::to_string(op.result.size()) +
                      " entries, expected " + std::to_string(n);
            return m;
        }
        for (NodeId k = 0; k < n; ++k) {
            const auto& e = op.result[k];
            if (e.is_bottom())
                continue;
            returned_ts[{k, *e.value}].insert(e.ts);
        }
    }

    std::map<std::pair<NodeId, Value>, std::size_t> real_writes;
    std::vector<std::int64_t> first_write_inv(n, kInf);
    for (std::size_t x = 0; x < ops.size(); ++x) {
        const auto& op = ops[x];
        if (op.kind != OpKind::Write)
            continue;
        if (!real_writes.emplace(std::make_pair(op.node, op.value), x).second) {
            m.error = "value " + op.value.hex() + " written twice by p" + std::to_string(op.node);
            return m;
        }
        first_write_inv[op.node] = std::min(first_write_inv[op.node], t(op.invoke));
    }

    m.chain.assign(n, {});
    std::map<std::pair<NodeId, Value>, std::size_t> lin_of;

    // Pre-history versions, ordered by timestamp.
    std::vector<std::vector<std::pair<Timestamp, Value>>> pre(n);
    for (const auto& [key, tss] : returned_ts) {
        if (real_writes.count(key))
            continue;
        if (tss.size() > 1) {
            m.error = "pre-history value " + key.second.hex() + " of p" +
                      std::to_string(key.first) + " returned with different timestamps";
            return m;
        }
        pre[key.first].emplace_back(*tss.begin(), key.second);
    }
    for (NodeId k = 0; k < n; ++k) {
        std::sort(pre[k].begin(), pre[k].end());
        for (const auto& [ts, v] : pre[k]) {
            LinOp op;
            op.kind = OpKind::Write;
            op.node = k;
            op.value = v;
            op.inv = 0;
            op.resp = first_write_inv[k] == kInf ? kInf : first_write_inv[k] - 1;
            op.pre_history = true;
            op.pre_ts = ts;
            op.rank = m.chain[k].size() + 1;
            lin_of[{k, v}] = m.ops.size();
            m.chain[k].push_back(m.ops.size());
            m.ops.push_back(std::move(op));
        }
    }

    // Real writes that are known to have taken effect, in invocation order.
    for (std::size_t x = 0; x < ops.size(); ++x) {
        const auto& op = ops[x];
        if (op.kind != OpKind::Write)
            continue;
        bool effective = op.respond.has_value() || returned_ts.count({op.node, op.value});
        if (!effective)
            continue;
        LinOp l;
        l.kind = OpKind::Write;
        l.node = op.node;
        l.value = op.value;
        l.inv = t(op.invoke);
        l.resp = op.respond ? t(*op.respond) : kInf;
        l.op_index = x;
        l.rank = m.chain[op.node].size() + 1;
        lin_of[{op.node, op.value}] = m.ops.size();
        m.chain[op.node].push_back(m.ops.size());
        m.ops.push_back(std::move(l));
    }

    for (std::size_t x = 0; x < ops.size(); ++x) {
        const auto& op = ops[x];
        if (op.kind != OpKind::Snapshot || !op.respond)
            continue;
        LinOp l;
        l.kind = OpKind::Snapshot;
        l.node = op.node;
        l.inv = t(op.invoke);
        l.resp = t(*op.respond);
        l.op_index = x;
        l.ver.assign(n, 0);
        for (NodeId k = 0; k < n; ++k) {
            const auto& e = op.result[k];
            if (!e.is_bottom())
                l.ver[k] = m.ops[lin_of.at({k, *e.value})].rank;
        }
        m.ops.push_back(std::move(l));
    }
    return m;
}

std::string replay_witness(const LinModel& m, const std::vector<std::size_t>& order)
{
    if (order.size() != m.ops.size())
        return "witness does not cover every operation";
    std::vector<std::size_t> state(m.n, 0);
    std::vector<bool> seen(m.ops.size(), false);
    for (std::size_t p = 0; p < order.size(); ++p) {
        auto x = order[p];
        if (x >= m.ops.size() || seen[x])
            return "witness repeats or names unknown operation";
        seen[x] = true;
        const auto& op = m.ops[x];
        if (op.kind == OpKind::Write) {
            if (op.rank != state[op.node] + 1)
                return "write out of order: " + describe(m, x);
            state[op.node] = op.rank;
        } else if (op.ver != state) {
            return "snapshot does not match sequential state: " + describe(m, x);
        }
    }
    for (std::size_t a = 0; a < order.size(); ++a)
        for (std::size_t b = a + 1; b < order.size(); ++b)
            if (m.ops[order[b]].resp < m.ops[order[a]].inv)
                return "real-time order broken between " + describe(m, order[a]) + " and " +
                       describe(m, order[b]);
    return {};
}

// ---- polynomial checker ----------------------------------------------------

Verdict check_polynomial(const History& h)
{
    Verdict v;
    v.method = "graph";
    auto m = build_model(h);
    v.ops = m.ops.size();
    if (!m.error.empty()) {
        v.ok = false;
        v.certificate = m.error;
        return v;
    }
    const auto sz = m.ops.size();
    std::vector<std::vector<std::size_t>> adj(sz);
    auto edge = [&](std::size_t a, std::size_t b) { adj[a].push_back(b); };

    // Real-time order. Sorting by invocation lets each op link only to the
    // ops that start after it ends.
    std::vector<std::size_t> by_inv(sz);
    for (std::size_t x = 0; x < sz; ++x)
        by_inv[x] = x;
    std::sort(by_inv.begin(), by_inv.end(),
              [&](std::size_t a, std::size_t b) { return m.ops[a].inv < m.ops[b].inv; });
    for (std::size_t a = 0; a < sz; ++a) {
        if (m.ops[a].resp == kInf)
            continue;
        auto it = std::upper_bound(by_inv.begin(), by_inv.end(), m.ops[a].resp,
                                   [&](std::int64_t r, std::size_t b) { return r < m.ops[b].inv; });
        for (; it != by_inv.end(); ++it)
            edge(a, *it);
    }
    for (const auto& c : m.chain)
        for (std::size_t r = 1; r < c.size(); ++r)
            edge(c[r - 1], c[r]);

    std::vector<std::size_t> snaps;
    for (std::size_t x = 0; x < sz; ++x)
        if (m.ops[x].kind == OpKind::Snapshot)
            snaps.push_back(x);
    for (auto s : snaps) {
        const auto& op = m.ops[s];
        for (NodeId k = 0; k < m.n; ++k) {
            auto r = op.ver[k];
            if (r > 0)
                edge(m.chain[k][r - 1], s);
            if (r < m.chain[k].size())
                edge(s, m.chain[k][r]);
        }
    }
    for (std::size_t a = 0; a < snaps.size(); ++a) {
        for (std::size_t b = a + 1; b < snaps.size(); ++b) {
            const auto& va = m.ops[snaps[a]].ver;
            const auto& vb = m.ops[snaps[b]].ver;
            bool le = true, ge = true;
            for (NodeId k = 0; k < m.n; ++k) {
                le = le && va[k] <= vb[k];
                ge = ge && va[k] >= vb[k];
            }
            if (!le && !ge) {
                v.ok = false;
                v.certificate = "incomparable snapshots: " + describe(m, snaps[a]) + " vs " +
                                describe(m, snaps[b]);
                return v;
            }
            if (le && !ge)
                edge(snaps[a], snaps[b]);
            else if (ge && !le)
                edge(snaps[b], snaps[a]);
        }
    }

    std::vector<std::size_t> indeg(sz, 0);
    for (const auto& out : adj)
        for (auto b : out)
            ++indeg[b];
    using Item = std::pair<std::int64_t, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;
    for (std::size_t x = 0; x < sz; ++x)
        if (indeg[x] == 0)
            ready.push({m.ops[x].inv, x});
    while (!ready.empty()) {
        auto x = ready.top().second;
        ready.pop();
        v.witness.push_back(x);
        for (auto b : adj[x])
            if (--indeg[b] == 0)
                ready.push({m.ops[b].inv, b});
    }
    if (v.witness.size() == sz)
        return v;

    // Extract one cycle among the leftover nodes.
    v.ok = false;
    std::vector<int> color(sz, 0);
    std::vector<std::size_t> parent(sz, sz);
    std::vector<std::size_t> cycle;
    std::function<bool(std::size_t)> dfs = [&](std::size_t x) {
        color[x] = 1;
        for (auto b : adj[x]) {
            if (indeg[b] == 0)
                continue;
            if (color[b] == 1) {
                for (auto y = x; y != b; y = parent[y])
                    cycle.push_back(y);
                cycle.push_back(b);
                std::reverse(cycle.begin(), cycle.end());
                return true;
            }
            if (color[b] == 0) {
                parent[b] = x;
                if (dfs(b))
                    return true;
            }
        }
        color[x] = 2;
        return false;
    };
    for (std::size_t x = 0; x < sz && cycle.empty(); ++x)
        if (indeg[x] > 0 && color[x] == 0)
            dfs(x);
    std::ostringstream os;
    os << "ordering cycle:";
    for (auto x : cycle)
        os << " " << describe(m, x) << " ->";
    if (!cycle.empty())
        os << " " << describe(m, cycle.front());
    v.certificate = os.str();
    v.witness.clear();
    return v;
}

// ---- exhaustive checker ----------------------------------------------------

Verdict check_exhaustive(const History& h, std::size_t max_ops)
{
    Verdict v;
    v.method = "search";
    auto m = build_model(h);
    v.ops = m.ops.size();
    if (!m.error.empty()) {
        v.ok = false;
        v.certificate = m.error;
        return v;
    }
    const auto sz = m.ops.size();
    if (sz > max_ops || sz > 63)
        throw std::length_error("too many operations for exhaustive search");

    std::vector<std::uint64_t> before(sz, 0);
    for (std::size_t a = 0; a < sz; ++a)
        for (std::size_t b = 0; b < sz; ++b)
            if (a != b && m.ops[a].resp < m.ops[b].inv)
                before[b] |= 1ull << a;

    std::unordered_set<std::uint64_t> failed;
    std::vector<std::size_t> path;
    const std::uint64_t all = sz == 64 ? ~0ull : (1ull << sz) - 1;

    auto version = [&](std::uint64_t mask, NodeId k) {
        std::size_t r = 0;
        while (r < m.chain[k].size() && (mask >> m.chain[k][r] & 1))
            ++r;
        return r;
    };

    std::function<bool(std::uint64_t)> go = [&](std::uint64_t mask) {
        if (mask == all)
            return true;
        if (failed.count(mask))
            return false;
        for (std::size_t x = 0; x < sz; ++x) {
            if (mask >> x & 1)
                continue;
            if ((before[x] & ~mask) != 0)
                continue;
            const auto& op = m.ops[x];
            if (op.kind == OpKind::Write) {
                if (version(mask, op.node) + 1 != op.rank)
                    continue;
            } else {
                bool match = true;
                for (NodeId k = 0; k < m.n && match; ++k)
                    match = version(mask, k) == op.ver[k];
                if (!match)
                    continue;
            }
            path.push_back(x);
            if (go(mask | 1ull << x))
                return true;
            path.pop_back();
        }
        failed.insert(mask);
        return false;
    };

    if (go(0)) {
        v.witness = path;
    } else {
        v.ok = false;
        v.certificate = "no sequential order satisfies the history";
    }
    return v;
}

// ---- consistency audit -----------------------------------------------------

std::vector<Violation> audit_consistency(const World& w)
{
    const auto n = w.size();
    std::vector<Timestamp> max_ts(n, 0);
    std::vector<std::uint64_t> max_ssn(n, 0), max_sns(n, 0);
    std::vector<std::string> ts_src(n), ssn_src(n), sns_src(n);
    bool tasks = false;

    auto see_ts = [&](NodeId i, Timestamp ts, const char* where) {
        if (i < n && ts > max_ts[i]) {
            max_ts[i] = ts;
            ts_src[i] = where;
        }
    };
    auto see_ssn = [&](NodeId i, std::uint64_t s, const char* where) {
        if (i < n && s > max_ssn[i]) {
            max_ssn[i] = s;
            ssn_src[i] = where;
        }
    };
    auto see_sns = [&](NodeId i, std::uint64_t s, const char* where) {
        if (i < n && s > max_sns[i]) {
            max_sns[i] = s;
            sns_src[i] = where;
        }
    };
    auto see_array = [&](const RegisterArray& a, const char* where) {
        for (NodeId k = 0; k < std::min(n, a.size()); ++k)
            see_ts(k, a[k].ts, where);
    };

    // A crashed node never acts again, so neither its state nor anything
    // addressed to it can cause harm.
    for (NodeId j = 0; j < n; ++j) {
        const auto& node = w.node(j);
        const auto& v = node.vars();
        tasks = tasks || !v.pnd.empty();
        if (w.crashed(j))
            continue;
        see_array(v.reg, "reg");
        for (const auto& a : node.held_arrays())
            see_array(a, "round");
        for (auto s : node.held_ssns())
            see_ssn(j, s, "round");
        for (NodeId k = 0; k < std::min(n, v.pnd.size()); ++k)
            see_sns(k, v.pnd[k].sns, "pndTsk");
    }
    w.for_each_in_flight([&](const Envelope& e) {
        if (e.receiver < n && w.crashed(e.receiver))
            return;
        switch (e.kind) {
        case MsgKind::Gossip:
            see_ts(e.receiver, e.entry.ts, "GOSSIP");
            see_sns(e.receiver, e.sns, "GOSSIP");
            break;
        case MsgKind::Write:
        case MsgKind::WriteAck:
            see_array(e.reg, to_string(e.kind));
            break;
        case MsgKind::Snapshot:
            see_array(e.reg, "SNAPSHOT");
            see_ssn(e.sender, e.ssn, "SNAPSHOT");
            break;
        case MsgKind::SnapshotAck:
            see_array(e.reg, "SNAPSHOTack");
            see_ssn(e.receiver, e.ssn, "SNAPSHOTack");
            break;
        default:
            break;
        }
        for (const auto& t : e.tasks)
            see_sns(t.node, t.sns, "SNAPSHOT task");
        for (const auto& s : e.saves)
            see_sns(s.node, s.sns, "SAVE");
        for (const auto& k : e.save_keys)
            see_sns(k.node, k.sns, "SAVEack");
    });

    std::vector<Violation> out;
    for (NodeId i = 0; i < n; ++i) {
        if (w.crashed(i))
            continue;
        const auto& v = w.node(i).vars();
        if (max_ts[i] > v.ts)
            out.push_back({i, "ts", "ts=" + std::to_string(v.ts) + " < " +
                                        std::to_string(max_ts[i]) + " in " + ts_src[i]});
        if (max_ssn[i] > v.ssn)
            out.push_back({i, "ssn", "ssn=" + std::to_string(v.ssn) + " < " +
                                         std::to_string(max_ssn[i]) + " in " + ssn_src[i]});
        if (!tasks)
            continue;
        if (max_sns[i] > v.sns)
            out.push_back({i, "sns", "sns=" + std::to_string(v.sns) + " < " +
                                         std::to_string(max_sns[i]) + " in " + sns_src[i]});
        if (v.pnd.size() != n)
            continue;
        if (v.pnd[i].sns != v.sns)
            out.push_back({i, "own-task", "pndTsk[self].sns=" + std::to_string(v.pnd[i].sns) +
                                              " != sns=" + std::to_string(v.sns)});
        const auto vc_now = vector_clock(v.reg);
        for (NodeId k = 0; k < n; ++k) {
            const auto& vc = v.pnd[k].vc;
            if (vc && (vc->size() != n || !vc_leq(*vc, vc_now)))
                out.push_back({i, "vc", "pndTsk[" + std::to_string(k) + "].vc exceeds VC"});
        }
    }
    return out;
}

std::vector<std::string> find_ts_collisions(const World& w)
{
    const auto n = w.size();
    std::map<std::pair<NodeId, Timestamp>, std::optional<Value>> seen;
    std::set<std::pair<NodeId, Timestamp>> bad;
    auto see_array = [&](const RegisterArray& a) {
        for (NodeId k = 0; k < std::min(n, a.size()); ++k) {
            if (a[k].ts == 0)
                continue;
            auto [it, fresh] = seen.emplace(std::make_pair(k, a[k].ts), a[k].value);
            if (!fresh && it->second != a[k].value)
                bad.insert(it->first);
        }
    };
    for (NodeId j = 0; j < n; ++j) {
        see_array(w.node(j).vars().reg);
        for (const auto& a : w.node(j).held_arrays())
            see_array(a);
    }
    w.for_each_in_flight([&](const Envelope& e) {
        if (e.reg.size() == n)
            see_array(e.reg);
    });
    std::vector<std::string> out;
    for (const auto& [k, ts] : bad)
        out.push_back("p" + std::to_string(k) + " ts " + std::to_string(ts));
    return out;
}

// ---- cycles ----------------------------------------------------------------

CycleDetector::CycleDetector(std::size_t n, bool require_gossip)
    : n_(n), require_gossip_(require_gossip), alive_(n, true), required_(n, true), done_(n, false),
      open_(n)
{
}

std::size_t CycleDetector::cycle_of(std::uint64_t step) const
{
    return static_cast<std::size_t>(
        std::lower_bound(boundaries_.begin(), boundaries_.end(), step) - boundaries_.begin());
}

void CycleDetector::on(const TraceRecord& r)
{
    switch (r.kind) {
    case TraceKind::Crash: {
        auto c = r.node;
        alive_[c] = false;
        required_[c] = false;
        open_[c].clear();
        for (NodeId i = 0; i < n_; ++i) {
            for (auto& it : open_[i]) {
                std::erase_if(it.waiting, [c](const auto& w) { return std::get<0>(w) == c; });
                if (it.gossip_due.size() > c && it.gossip_due[c]) {
                    it.gossip_due[c] = false;
                    --it.gossip_left;
                }
            }
        }
        for (NodeId i = 0; i < n_; ++i)
            check(i, r.step);
        break;
    }
    case TraceKind::Resume:
        alive_[r.node] = true;
        break;
    case TraceKind::IterationStart: {
        auto i = r.node;
        if (!required_[i] || done_[i])
            break;
        Iter it;
        if (require_gossip_) {
            it.gossip_due.assign(n_, false);
            for (NodeId k = 0; k < n_; ++k) {
                if (k != i && alive_[k]) {
                    it.gossip_due[k] = true;
                    ++it.gossip_left;
                }
            }
        }
        open_[i].push_back(std::move(it));
        break;
    }
    case TraceKind::IterationEnd:
        if (!open_[r.node].empty()) {
            open_[r.node].back().ended = true;
            check(r.node, r.step);
        }
        break;
    case TraceKind::Send:
        if (r.in_tick && is_request(r.msg) && r.peer < n_ && alive_[r.peer] &&
            !open_[r.node].empty() && !open_[r.node].back().ended)
            open_[r.node].back().waiting.insert({r.peer, r.msg, r.tag});
        break;
    case TraceKind::Deliver:
    case TraceKind::Duplicate:
        if (is_reply(r.msg)) {
            auto client = r.peer;
            std::tuple<NodeId, MsgKind, std::uint64_t> key{r.node, request_kind(r.msg), r.tag};
            for (auto& it : open_[client])
                it.waiting.erase(key);
            check(client, r.step);
        } else if (r.msg == MsgKind::Gossip) {
            for (auto& it : open_[r.node]) {
                if (it.gossip_due.size() > r.peer && it.gossip_due[r.peer]) {
                    it.gossip_due[r.peer] = false;
                    --it.gossip_left;
                }
            }
            check(r.node, r.step);
        }
        break;
    case TraceKind::RoundDone:
        for (auto& it : open_[r.node])
            std::erase_if(it.waiting, [&](const auto& w) {
                return std::get<1>(w) == r.msg && std::get<2>(w) == r.tag;
            });
        check(r.node, r.step);
        break;
    default:
        break;
    }
}

void CycleDetector::check(NodeId i, std::uint64_t step)
{
    if (required_[i] && !done_[i]) {
        for (const auto& it : open_[i]) {
            if (it.ended && it.waiting.empty() && it.gossip_left == 0) {
                done_[i] = true;
                open_[i].clear();
                break;
            }
        }
    }
    bool any = false;
    for (NodeId k = 0; k < n_; ++k) {
        if (!required_[k])
            continue;
        any = true;
        if (!done_[k])
            return;
    }
    if (any)
        close_cycle(step);
}

void CycleDetector::close_cycle(std::uint64_t step)
{
    boundaries_.push_back(step);
    required_ = alive_;
    std::fill(done_.begin(), done_.end(), false);
    for (auto& o : open_)
        o.clear();
}

std::size_t count_async_cycles(const std::vector<TraceRecord>& trace, std::size_t n,
                               bool require_gossip)
{
    CycleDetector d(n, require_gossip);
    for (const auto& r : trace)
        d.on(r);
    return d.cycles();
}

} // namespace stabsnap
