#include "stabsnap/net_sim.hpp"

#include <algorithm>
#include <sstream>

namespace stabsnap {

namespace {

std::vector<std::string> split_path(const std::string& path)
{
    std::vector<std::string> out;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.'))
        out.push_back(part);
    return out;
}

std::size_t parse_index(const std::string& s, std::size_t bound, const std::string& path)
{
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("bad index in field path: " + path);
    }
    if (pos != s.size() || v >= bound)
        throw ConfigError("index out of range in field path: " + path);
    return v;
}

std::optional<VectorClock> opt_vc(const nlohmann::json& j)
{
    if (j.is_null())
        return std::nullopt;
    return j.get<VectorClock>();
}

std::optional<RegisterArray> opt_array(const nlohmann::json& j)
{
    if (j.is_null())
        return std::nullopt;
    return array_from_json(j);
}

} // namespace

std::optional<Envelope> Channel::push(Envelope e)
{
    std::optional<Envelope> evicted;
    if (capacity_ == 0)
        return e;
    if (buf_.size() >= capacity_) {
        evicted = std::move(buf_.front());
        buf_.pop_front();
    }
    buf_.push_back(std::move(e));
    return evicted;
}

Envelope Channel::take(std::size_t idx)
{
    Envelope e = std::move(buf_.at(idx));
    buf_.erase(buf_.begin() + static_cast<std::ptrdiff_t>(idx));
    return e;
}

const char* to_string(TraceKind k)
{
    static const char* names[] = {"invoke", "respond",   "abort", "iter_start", "iter_end",
                                  "round_done", "send",  "deliver", "drop",     "duplicate",
                                  "evict",  "crash",     "resume", "freeze",    "reset",
                                  "corrupt"};
    return names[static_cast<std::size_t>(k)];
}

nlohmann::json to_json(const TraceRecord& r)
{
    nlohmann::json j;
    j["kind"] = to_string(r.kind);
    j["step"] = r.step;
    j["data_step"] = r.data_step;
    j["node"] = r.node;
    switch (r.kind) {
    case TraceKind::Send:
    case TraceKind::Deliver:
    case TraceKind::Drop:
    case TraceKind::Duplicate:
    case TraceKind::Evict:
        j["peer"] = r.peer;
        j["msg"] = to_string(r.msg);
        j["tag"] = r.tag;
        j["seq"] = r.seq;
        if (r.kind == TraceKind::Send)
            j["in_tick"] = r.in_tick;
        break;
    case TraceKind::RoundDone:
        j["msg"] = to_string(r.msg);
        j["tag"] = r.tag;
        break;
    case TraceKind::Invoke:
        j["op"] = to_string(r.op);
        if (r.op == OpKind::Write)
            j["value"] = r.value.hex();
        break;
    case TraceKind::Respond:
        j["op"] = to_string(r.op);
        if (r.op == OpKind::Write)
            j["ts"] = r.ts;
        else
            j["result"] = to_json(r.result);
        break;
    case TraceKind::Abort:
        j["op"] = to_string(r.op);
        break;
    default:
        break;
    }
    return j;
}

std::uint64_t MessageStats::total_logical_ops() const
{
    std::uint64_t s = 0;
    for (std::size_t k = 1; k < kMsgKinds; ++k)
        s += logical[k];
    return s;
}

std::size_t World::KeyHash::operator()(const LogicalKey& k) const noexcept
{
    std::uint64_t h = k.tag * 0x9e3779b97f4a7c15ull;
    h ^= (static_cast<std::uint64_t>(k.src) << 40) ^ (static_cast<std::uint64_t>(k.dst) << 20) ^
         static_cast<std::uint64_t>(k.kind);
    h ^= h >> 29;
    return static_cast<std::size_t>(h);
}

World::World(SimConfig cfg, std::vector<std::unique_ptr<Node>> nodes)
    : cfg_(std::move(cfg)), nodes_(std::move(nodes)), rng_(cfg_.seed),
      gossip_rng_(cfg_.seed ^ 0x5bd1e9955bd1e995ull)
{
    if (nodes_.empty())
        throw ConfigError("world needs at least one node");
    if (cfg_.n != nodes_.size())
        throw ConfigError("node count does not match configuration");
    const auto n = nodes_.size();
    crashed_.assign(n, false);
    data_.assign(n * n, Channel(cfg_.capacity));
    gossip_.assign(n * n, Channel(cfg_.capacity));
    schedule_done_.assign(cfg_.faults.crashes.size(), false);
    for (const auto& c : cfg_.faults.crashes)
        if (c.node >= n)
            throw ConfigError("crash schedule names unknown node");
}

std::size_t World::crashed_count() const
{
    return static_cast<std::size_t>(std::count(crashed_.begin(), crashed_.end(), true));
}

void World::emit(TraceRecord r)
{
    if (listeners_.empty())
        return;
    r.step = step_;
    r.data_step = data_step_;
    for (auto& l : listeners_)
        l(r);
}

void World::crash(NodeId i)
{
    if (crashed_.at(i))
        return;
    if (2 * (crashed_count() + 1) >= size() && !cfg_.faults.allow_quorum_loss)
        throw ConfigError("crash would leave no majority of live nodes");
    crashed_[i] = true;
    TraceRecord r;
    r.kind = TraceKind::Crash;
    r.node = i;
    emit(std::move(r));
}

void World::resume(NodeId i)
{
    if (!crashed_.at(i))
        return;
    crashed_[i] = false;
    TraceRecord r;
    r.kind = TraceKind::Resume;
    r.node = i;
    emit(std::move(r));
}

bool World::invoke(NodeId i, OpRequest op)
{
    TraceRecord r;
    r.kind = TraceKind::Invoke;
    r.node = i;
    r.op = op.kind;
    r.value = op.value;
    if (!nodes_.at(i)->invoke(std::move(op)))
        return false;
    emit(std::move(r));
    return true;
}

bool World::abort(NodeId i)
{
    if (!nodes_.at(i)->abort_operation())
        return false;
    TraceRecord r;
    r.kind = TraceKind::Abort;
    r.node = i;
    emit(std::move(r));
    return true;
}

void World::apply_schedule()
{
    for (std::size_t k = 0; k < cfg_.faults.crashes.size(); ++k) {
        const auto& c = cfg_.faults.crashes[k];
        if (schedule_done_[k] || c.at_data_step > data_step_)
            continue;
        schedule_done_[k] = true;
        if (c.resume)
            resume(c.node);
        else
            crash(c.node);
    }
}

std::vector<SchedEvent> World::enabled_events() const
{
    std::vector<SchedEvent> ev;
    const auto n = size();
    for (NodeId i = 0; i < n; ++i)
        if (!crashed_[i])
            ev.push_back({SchedEvent::Type::Tick, i, i});
    for (NodeId s = 0; s < n; ++s)
        for (NodeId d = 0; d < n; ++d)
            if (!crashed_[d] && !data_[s * n + d].empty())
                ev.push_back({SchedEvent::Type::Deliver, d, s});
    return ev;
}

bool World::step()
{
    apply_schedule();
    const auto n = size();

    std::vector<std::pair<NodeId, NodeId>> gossip_ready;
    for (NodeId s = 0; s < n; ++s)
        for (NodeId d = 0; d < n; ++d)
            if (!crashed_[d] && !gossip_[s * n + d].empty())
                gossip_ready.emplace_back(s, d);

    auto gossip_step = [&] {
        std::uniform_int_distribution<std::size_t> pick(0, gossip_ready.size() - 1);
        auto [s, d] = gossip_ready[pick(gossip_rng_)];
        deliver(s, d, true);
        ++step_;
        return true;
    };

    if (!gossip_ready.empty()) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(gossip_rng_) < cfg_.gossip_share)
            return gossip_step();
    }

    std::optional<SchedEvent> chosen;
    if (cfg_.policy == Policy::RoundRobin) {
        const std::size_t slots = n * (n + 1);
        for (std::size_t k = 0; k < slots && !chosen; ++k) {
            std::size_t slot = (rr_cursor_ + k) % slots;
            NodeId i = static_cast<NodeId>(slot / (n + 1));
            std::size_t r = slot % (n + 1);
            if (crashed_[i])
                continue;
            if (r == 0) {
                chosen = SchedEvent{SchedEvent::Type::Tick, i, i};
            } else {
                NodeId s = static_cast<NodeId>(r - 1);
                if (!data_[s * n + i].empty())
                    chosen = SchedEvent{SchedEvent::Type::Deliver, i, s};
            }
            if (chosen)
                rr_cursor_ = (slot + 1) % slots;
        }
    } else {
        auto ev = enabled_events();
        if (filter_) {
            auto f = filter_(*this, ev);
            if (!f.empty())
                ev = std::move(f);
        }
        std::vector<SchedEvent> ticks, dels;
        for (const auto& e : ev)
            (e.type == SchedEvent::Type::Tick ? ticks : dels).push_back(e);
        const std::vector<SchedEvent>* pool = nullptr;
        if (!ticks.empty() && !dels.empty()) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            pool = u(rng_) < cfg_.tick_share ? &ticks : &dels;
        } else if (!ticks.empty()) {
            pool = &ticks;
        } else if (!dels.empty()) {
            pool = &dels;
        }
        if (pool) {
            std::uniform_int_distribution<std::size_t> pick(0, pool->size() - 1);
            chosen = (*pool)[pick(rng_)];
        }
    }

    if (!chosen) {
        if (!gossip_ready.empty())
            return gossip_step();
        return false;
    }
    if (chosen->type == SchedEvent::Type::Tick)
        tick(chosen->node);
    else
        deliver(chosen->src, chosen->node, false);
    ++data_step_;
    ++step_;
    return true;
}

void World::tick(NodeId i)
{
    if (pre_tick_)
        pre_tick_(*this, i);
    Outbox out;
    nodes_[i]->tick(out);
    process(i, out, true);
}

void World::deliver(NodeId src, NodeId dst, bool gossip_lane)
{
    const auto n = size();
    Channel& ch = gossip_lane ? gossip_[src * n + dst] : data_[src * n + dst];
    auto& rng = gossip_lane ? gossip_rng_ : rng_;
    std::size_t idx = 0;
    if (cfg_.faults.reorder && ch.size() > 1) {
        std::uniform_int_distribution<std::size_t> pick(0, ch.size() - 1);
        idx = pick(rng);
    }
    const Envelope& head = ch.at(idx);
    LogicalKey key{head.sender, head.receiver, head.kind, head.tag};
    std::uniform_real_distribution<double> u(0.0, 1.0);

    TraceRecord r;
    r.node = src;
    r.peer = dst;
    r.msg = head.kind;
    r.tag = head.tag;
    r.seq = head.seq;

    if (cfg_.faults.drop_rate > 0.0 && u(rng) < cfg_.faults.drop_rate) {
        auto& c = drops_in_row_[key];
        if (c < cfg_.faults.fairness_cap) {
            ++c;
            ++stats_.dropped[static_cast<std::size_t>(head.kind)];
            ch.take(idx);
            r.kind = TraceKind::Drop;
            emit(std::move(r));
            return;
        }
    }
    drops_in_row_.erase(key);

    bool dup = cfg_.faults.dup_rate > 0.0 && u(rng) < cfg_.faults.dup_rate;
    Envelope env = dup ? ch.at(idx) : ch.take(idx);
    ++stats_.delivered[static_cast<std::size_t>(env.kind)];
    if (dup)
        ++stats_.duplicated[static_cast<std::size_t>(env.kind)];
    r.kind = dup ? TraceKind::Duplicate : TraceKind::Deliver;
    emit(std::move(r));

    if (env.kind == MsgKind::Gossip && gossip_seen_)
        gossip_seen_(dst, env);
    Outbox out;
    nodes_[dst]->deliver(env, out);
    process(dst, out, false);
}

void World::count_logical(const Envelope& e)
{
    if (seen_.insert({e.sender, e.receiver, e.kind, e.tag}).second)
        ++stats_.logical[static_cast<std::size_t>(e.kind)];
    if (e.kind == MsgKind::SnapshotAck && !e.saves.empty()) {
        std::vector<TaskKey> keys;
        for (const auto& s : e.saves)
            keys.push_back({s.node, s.sns});
        if (seen_.insert({e.sender, e.receiver, MsgKind::Save, save_tag(keys)}).second)
            ++stats_.logical[static_cast<std::size_t>(MsgKind::Save)];
    }
}

void World::process(NodeId i, Outbox& out, bool in_tick)
{
    const auto n = size();
    // Iteration starts go first so that the sends of the step belong to it.
    for (const auto& ev : out.events) {
        if (ev.kind != NodeEventKind::IterationStart)
            continue;
        TraceRecord r;
        r.kind = TraceKind::IterationStart;
        r.node = i;
        emit(std::move(r));
    }
    for (auto& env : out.sends) {
        env.sender = i;
        env.seq = ++seq_;
        bool g = env.kind == MsgKind::Gossip;
        if (g && gossip_decorate_)
            gossip_decorate_(i, env);
        if (!g)
            count_logical(env);
        ++stats_.sent[static_cast<std::size_t>(env.kind)];
        TraceRecord r;
        r.kind = TraceKind::Send;
        r.node = i;
        r.peer = env.receiver;
        r.msg = env.kind;
        r.tag = env.tag;
        r.seq = env.seq;
        r.in_tick = in_tick;
        emit(r);
        Channel& ch = g ? gossip_[i * n + env.receiver] : data_[i * n + env.receiver];
        if (auto ev = ch.push(std::move(env))) {
            ++stats_.evicted[static_cast<std::size_t>(ev->kind)];
            TraceRecord e;
            e.kind = TraceKind::Evict;
            e.node = ev->sender;
            e.peer = ev->receiver;
            e.msg = ev->kind;
            e.tag = ev->tag;
            e.seq = ev->seq;
            emit(std::move(e));
        }
    }
    for (const auto& env : out.local)
        count_logical(env);
    for (auto& ev : out.events) {
        TraceRecord r;
        r.node = i;
        switch (ev.kind) {
        case NodeEventKind::IterationStart:
            continue;
        case NodeEventKind::IterationEnd:
            r.kind = TraceKind::IterationEnd;
            break;
        case NodeEventKind::RoundDone:
            r.kind = TraceKind::RoundDone;
            r.msg = ev.msg;
            r.tag = ev.tag;
            break;
        case NodeEventKind::Respond:
            r.kind = TraceKind::Respond;
            r.op = ev.op;
            r.ts = ev.ts;
            r.result = std::move(ev.result);
            break;
        }
        emit(std::move(r));
    }
}

void World::for_each_in_flight(const std::function<void(const Envelope&)>& fn) const
{
    for (const auto& c : data_)
        for (const auto& e : c.buffer())
            fn(e);
    for (const auto& c : gossip_)
        for (const auto& e : c.buffer())
            fn(e);
}

void World::flush_channels()
{
    for (auto& c : data_)
        c.clear();
    for (auto& c : gossip_)
        c.clear();
}

void World::inject_transient(const TransientRecipe& recipe, bool midrun)
{
    if (step_ > 0 && !midrun)
        throw ConfigError("transient injection after the first step needs the midrun flag");
    for (const auto& a : recipe.assignments)
        apply_assignment(a);
    const auto n = size();
    for (auto e : recipe.forged) {
        if (e.sender >= n || e.receiver >= n || e.sender == e.receiver)
            throw ConfigError("forged envelope has bad endpoints");
        e.seq = ++seq_;
        auto& ch = e.kind == MsgKind::Gossip ? gossip_[e.sender * n + e.receiver]
                                              : data_[e.sender * n + e.receiver];
        ch.push(std::move(e));
    }
    if (recipe.random)
        apply_random(*recipe.random, recipe.seed);
    TraceRecord r;
    r.kind = TraceKind::Corrupt;
    emit(std::move(r));
}

void World::apply_assignment(const FieldAssignment& a)
{
    auto parts = split_path(a.path);
    const auto n = size();
    if (parts.size() < 3 || parts[0] != "node")
        throw ConfigError("unknown field: " + a.path);
    auto& node = *nodes_[parse_index(parts[1], n, a.path)];
    auto& v = node.vars_mut();
    const bool has_tasks = !v.pnd.empty();
    const auto& field = parts[2];
    try {
        if (parts.size() == 3 && field == "ts") {
            v.ts = a.value.get<Timestamp>();
        } else if (parts.size() == 3 && field == "ssn") {
            v.ssn = a.value.get<std::uint64_t>();
        } else if (parts.size() == 3 && field == "sns" && has_tasks) {
            v.sns = a.value.get<std::uint64_t>();
        } else if (field == "reg" && parts.size() >= 4) {
            auto k = parse_index(parts[3], n, a.path);
            if (parts.size() == 4)
                v.reg[k] = entry_from_json(a.value);
            else if (parts.size() == 5 && parts[4] == "ts")
                v.reg[k].ts = a.value.get<Timestamp>();
            else
                throw ConfigError("unknown field: " + a.path);
        } else if (field == "pnd" && has_tasks && parts.size() == 5) {
            auto k = parse_index(parts[3], n, a.path);
            auto& p = v.pnd[k];
            if (parts[4] == "sns")
                p.sns = a.value.get<std::uint64_t>();
            else if (parts[4] == "vc")
                p.vc = opt_vc(a.value);
            else if (parts[4] == "fnl")
                p.fnl = opt_array(a.value);
            else
                throw ConfigError("unknown field: " + a.path);
        } else {
            throw ConfigError("unknown field: " + a.path);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value for " + a.path + ": " + e.what());
    }
}

void World::apply_random(const RandomCorruption& rc, std::uint64_t seed)
{
    std::mt19937_64 rng(seed ^ 0xc0ffee1234567ull);
    const auto n = size();
    std::uniform_int_distribution<std::uint64_t> idx(0, rc.max_index);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    auto rand_value = [&] {
        std::vector<std::uint8_t> b(8);
        b[0] = 0xC0;
        for (std::size_t k = 1; k < b.size(); ++k)
            b[k] = static_cast<std::uint8_t>(rng() & 0xff);
        return Value(std::move(b));
    };
    auto rand_entry = [&]() -> RegisterEntry {
        if (u(rng) < 0.2)
            return RegisterEntry::bottom();
        return RegisterEntry{rand_value(), idx(rng)};
    };
    auto rand_array = [&] {
        RegisterArray a(n);
        for (std::size_t k = 0; k < n; ++k)
            a[k] = rand_entry();
        return a;
    };
    auto rand_vc = [&] {
        VectorClock vc(n);
        for (auto& x : vc)
            x = idx(rng);
        return vc;
    };

    bool tasks = false;
    for (NodeId i = 0; i < n; ++i) {
        auto& v = nodes_[i]->vars_mut();
        tasks = tasks || !v.pnd.empty();
        v.ts = idx(rng);
        v.ssn = idx(rng);
        for (std::size_t k = 0; k < n; ++k)
            v.reg[k] = rand_entry();
        if (!v.pnd.empty()) {
            v.sns = idx(rng);
            if (rc.forge_tasks) {
                for (auto& p : v.pnd) {
                    p.sns = idx(rng);
                    p.vc = u(rng) < 0.5 ? std::nullopt : std::optional<VectorClock>(rand_vc());
                    p.fnl = u(rng) < 0.5 ? std::nullopt
                                         : std::optional<RegisterArray>(rand_array());
                }
            }
        }
    }

    const std::vector<MsgKind> nb_kinds = {MsgKind::Gossip, MsgKind::Write, MsgKind::WriteAck,
                                           MsgKind::Snapshot, MsgKind::SnapshotAck};
    const std::vector<MsgKind> at_kinds = {MsgKind::Gossip,   MsgKind::Write,
                                           MsgKind::WriteAck, MsgKind::Snapshot,
                                           MsgKind::SnapshotAck, MsgKind::Save,
                                           MsgKind::SaveAck};
    const auto& kinds = tasks ? at_kinds : nb_kinds;
    std::uniform_int_distribution<std::size_t> kind_pick(0, kinds.size() - 1);
    std::uniform_int_distribution<std::size_t> count_pick(1, std::max<std::size_t>(1, rc.max_garbage));
    std::uniform_int_distribution<NodeId> node_pick(0, static_cast<NodeId>(n - 1));

    for (NodeId s = 0; s < n; ++s) {
        for (NodeId d = 0; d < n; ++d) {
            if (s == d || u(rng) >= rc.channel_fill)
                continue;
            auto cnt = count_pick(rng);
            for (std::size_t c = 0; c < cnt; ++c) {
                Envelope e;
                e.kind = kinds[kind_pick(rng)];
                e.sender = s;
                e.receiver = d;
                e.tag = idx(rng);
                e.seq = ++seq_;
                switch (e.kind) {
                case MsgKind::Gossip:
                    e.entry = rand_entry();
                    e.sns = tasks ? idx(rng) : 0;
                    break;
                case MsgKind::Write:
                case MsgKind::WriteAck:
                    e.reg = rand_array();
                    break;
                case MsgKind::Snapshot:
                    e.reg = rand_array();
                    e.ssn = idx(rng);
                    if (tasks && u(rng) < 0.5)
                        e.tasks.push_back({node_pick(rng), idx(rng),
                                           u(rng) < 0.5 ? std::nullopt
                                                        : std::optional<VectorClock>(rand_vc())});
                    break;
                case MsgKind::SnapshotAck:
                    e.reg = rand_array();
                    e.ssn = idx(rng);
                    if (tasks && u(rng) < 0.3)
                        e.saves.push_back({node_pick(rng), idx(rng), rand_array()});
                    break;
                case MsgKind::Save:
                    e.saves.push_back({node_pick(rng), idx(rng), rand_array()});
                    break;
                case MsgKind::SaveAck:
                    e.save_keys.push_back({node_pick(rng), idx(rng)});
                    break;
                }
                auto& ch = e.kind == MsgKind::Gossip ? gossip_[s * n + d] : data_[s * n + d];
                ch.push(std::move(e));
            }
        }
    }
}

} // namespace stabsnap
