#include "stabsnap/snapshot_at.hpp"

#include <algorithm>

namespace stabsnap {

SnapshotATNode::SnapshotATNode(NodeId id, std::size_t n, std::uint64_t delta)
    : Node(id, n), delta_(delta)
{
    vars_.reg = RegisterArray(n);
    vars_.pnd.resize(n);
}

std::vector<RegisterArray> SnapshotATNode::held_arrays() const
{
    std::vector<RegisterArray> out;
    if (round_)
        out = round_->arrays();
    if (pc_ == Pc::WriteRound)
        out.push_back(lreg_);
    return out;
}

std::vector<std::uint64_t> SnapshotATNode::held_ssns() const
{
    std::vector<std::uint64_t> out;
    if (round_ && round_->request() == MsgKind::Snapshot)
        for (const auto& [_, env] : round_->replies())
            out.push_back(env.ssn);
    return out;
}

bool SnapshotATNode::quiescent() const
{
    return pc_ == Pc::Top && !write_pending_ && !op_ && help_set().empty();
}

bool SnapshotATNode::abort_operation()
{
    bool had = op_.has_value();
    op_.reset();
    write_pending_.reset();
    round_.reset();
    pc_ = Pc::Top;
    return had;
}

bool SnapshotATNode::helping_others() const
{
    if (!in_base_snapshot())
        return false;
    return std::any_of(s_keys_.begin(), s_keys_.end(),
                       [this](const TaskKey& k) { return k.node != id_; });
}

std::vector<TaskRecord> SnapshotATNode::help_set() const
{
    const auto vc_now = vector_clock(vars_.reg);
    std::vector<TaskRecord> out;
    for (NodeId k = 0; k < n_; ++k) {
        const auto& p = vars_.pnd[k];
        if (p.fnl)
            continue;
        bool due = (k == id_ && p.sns > 0) || (delta_ == 0 && p.sns > 0) ||
                   (p.vc && p.vc->size() == n_ && delta_ <= vc_distance(vc_now, *p.vc));
        if (due)
            out.push_back({k, p.sns, p.vc});
    }
    return out;
}

std::vector<TaskRecord> SnapshotATNode::restrict_to_s(const std::vector<TaskRecord>& d) const
{
    std::vector<TaskRecord> out;
    for (const auto& t : d)
        if (s_keys_.count({t.node, t.sns}))
            out.push_back(t);
    return out;
}

void SnapshotATNode::do_merge(const std::vector<RegisterArray>& rec)
{
    ProtocolCore core{id_, n_};
    core.ts = vars_.ts;
    core.reg = std::move(vars_.reg);
    merge(core, rec, true);
    vars_.ts = core.ts;
    vars_.reg = std::move(core.reg);
}

void SnapshotATNode::tick(Outbox& out)
{
    poll_completion(out);
    if (auto req = take_queued()) {
        op_ = req->kind;
        if (req->kind == OpKind::Write) {
            write_pending_ = req->value;
        } else {
            vars_.sns += 1;
            vars_.pnd[id_] = PendingTask{vars_.sns, std::nullopt, std::nullopt};
        }
    }
    run(out);
    poll_completion(out);
}

void SnapshotATNode::poll_completion(Outbox& out)
{
    if (!op_)
        return;
    if (*op_ == OpKind::Write && !write_pending_) {
        NodeEvent ev{NodeEventKind::Respond};
        ev.op = OpKind::Write;
        ev.ts = lreg_.size() ? lreg_[id_].ts : 0;
        out.events.push_back(std::move(ev));
        op_.reset();
    } else if (*op_ == OpKind::Snapshot && vars_.pnd[id_].fnl) {
        NodeEvent ev{NodeEventKind::Respond};
        ev.op = OpKind::Snapshot;
        ev.result = *vars_.pnd[id_].fnl;
        out.events.push_back(std::move(ev));
        op_.reset();
    }
}

void SnapshotATNode::run(Outbox& out)
{
    switch (pc_) {
    case Pc::Top:
        out.events.push_back({NodeEventKind::IterationStart});
        housekeeping(out);
        if (write_pending_) {
            vars_.ts += 1;
            vars_.reg[id_] = RegisterEntry{*write_pending_, vars_.ts};
            lreg_ = vars_.reg;
            round_.emplace(MsgKind::Write, vars_.ts, n_);
            pc_ = Pc::WriteRound;
            send_round(write_request(), out, true);
            return;
        }
        snapshot_stage(out);
        return;
    case Pc::WriteRound:
        if (!round_->has_majority()) {
            send_round(write_request(), out, false);
            return;
        }
        out.events.push_back({NodeEventKind::RoundDone, MsgKind::Write, round_->tag()});
        do_merge(round_->arrays());
        round_.reset();
        write_pending_.reset();
        snapshot_stage(out);
        return;
    case Pc::SnapshotRound: {
        auto sd = restrict_to_s(help_set());
        if (!sd.empty() && !round_->has_majority()) {
            send_round(snapshot_request(), out, false);
            return;
        }
        out.events.push_back({NodeEventKind::RoundDone, MsgKind::Snapshot, round_->tag()});
        do_merge(round_->arrays());
        round_.reset();
        after_inner(out);
        return;
    }
    case Pc::SaveRound:
        if (!round_->has_majority()) {
            send_round(save_request(), out, false);
            return;
        }
        out.events.push_back({NodeEventKind::RoundDone, MsgKind::Save, round_->tag()});
        round_.reset();
        outer_until(out);
        return;
    }
}

void SnapshotATNode::housekeeping(Outbox& out)
{
    if (round_ && round_->request() == MsgKind::Snapshot)
        round_->drop_if([this](const Envelope& e) { return e.ssn != vars_.ssn; });
    vars_.ts = std::max(vars_.ts, vars_.reg[id_].ts);
    vars_.sns = std::max(vars_.sns, vars_.pnd[id_].sns);
    const auto vc_now = vector_clock(vars_.reg);
    for (auto& p : vars_.pnd)
        if (p.vc && (p.vc->size() != n_ || !vc_leq(*p.vc, vc_now)))
            p.vc.reset();
    if (vars_.sns != vars_.pnd[id_].sns)
        vars_.pnd[id_] = PendingTask{vars_.sns, std::nullopt, std::nullopt};
    for (auto& g : make_gossip(id_, vars_))
        out.sends.push_back(std::move(g));
}

void SnapshotATNode::snapshot_stage(Outbox& out)
{
    auto d = help_set();
    if (d.empty()) {
        end_iteration(out);
        return;
    }
    s_keys_.clear();
    for (const auto& t : d)
        s_keys_.insert({t.node, t.sns});
    begin_outer(out);
}

void SnapshotATNode::begin_outer(Outbox& out)
{
    vars_.ssn += 1;
    prev_ = vars_.reg;
    round_.emplace(MsgKind::Snapshot, vars_.ssn, n_);
    pc_ = Pc::SnapshotRound;
    send_round(snapshot_request(), out, true);
}

void SnapshotATNode::after_inner(Outbox& out)
{
    auto sd = restrict_to_s(help_set());
    if (prev_ == vars_.reg && !sd.empty()) {
        save_set_.clear();
        save_keys_.clear();
        for (const auto& k : s_keys_) {
            save_set_.push_back({k.node, vars_.pnd[k.node].sns, prev_});
            save_keys_.push_back({k.node, vars_.pnd[k.node].sns});
        }
        std::sort(save_keys_.begin(), save_keys_.end());
        save_keys_.erase(std::unique(save_keys_.begin(), save_keys_.end()), save_keys_.end());
        round_.emplace(MsgKind::Save, save_tag(save_keys_), n_);
        pc_ = Pc::SaveRound;
        send_round(save_request(), out, true);
        return;
    }
    auto& own = vars_.pnd[id_];
    bool own_in = std::any_of(sd.begin(), sd.end(), [this](const TaskRecord& t) {
        return t.node == id_ && t.sns == vars_.pnd[id_].sns;
    });
    if (own_in && !own.vc)
        own.vc = vector_clock(vars_.reg);
    outer_until(out);
}

void SnapshotATNode::outer_until(Outbox& out)
{
    auto sd = restrict_to_s(help_set());
    bool done = sd.empty();
    if (!done && sd.size() == 1 && sd.front().node == id_) {
        const auto& own = vars_.pnd[id_];
        done = own.sns > 0 && !own.fnl && own.vc &&
               delta_ <= vc_distance(vector_clock(vars_.reg), *own.vc);
    }
    if (done)
        end_iteration(out);
    else
        begin_outer(out);
}

void SnapshotATNode::end_iteration(Outbox& out)
{
    pc_ = Pc::Top;
    round_.reset();
    s_keys_.clear();
    out.events.push_back({NodeEventKind::IterationEnd});
}

Envelope SnapshotATNode::write_request() const
{
    Envelope e;
    e.kind = MsgKind::Write;
    e.reg = lreg_;
    e.tag = round_->tag();
    return e;
}

Envelope SnapshotATNode::snapshot_request() const
{
    Envelope e;
    e.kind = MsgKind::Snapshot;
    e.tasks = restrict_to_s(help_set());
    e.reg = vars_.reg;
    e.ssn = vars_.ssn;
    e.tag = vars_.ssn;
    return e;
}

Envelope SnapshotATNode::save_request() const
{
    Envelope e;
    e.kind = MsgKind::Save;
    e.saves = save_set_;
    e.tag = round_->tag();
    return e;
}

void SnapshotATNode::send_round(const Envelope& templ, Outbox& out, bool first)
{
    for (auto& m : fan_out(templ, id_, n_)) {
        if (m.receiver != id_) {
            out.sends.push_back(std::move(m));
        } else if (first) {
            out.local.push_back(m);
            serve(m, out, true);
        }
    }
}

void SnapshotATNode::deliver(const Envelope& env, Outbox& out)
{
    bool has_reg = env.kind == MsgKind::Write || env.kind == MsgKind::WriteAck ||
                   env.kind == MsgKind::Snapshot || env.kind == MsgKind::SnapshotAck;
    if (has_reg && env.reg.size() != n_)
        return;
    serve(env, out, false);
}

void SnapshotATNode::serve(const Envelope& env, Outbox& out, bool local)
{
    auto reply_to = [&](Envelope reply) {
        reply.sender = id_;
        reply.receiver = env.sender;
        reply.tag = env.tag;
        if (local) {
            out.local.push_back(reply);
            take_reply(reply);
        } else {
            out.sends.push_back(std::move(reply));
        }
    };

    switch (env.kind) {
    case MsgKind::Gossip:
        vars_.reg[id_] = entry_max(vars_.reg[id_], env.entry);
        vars_.ts = std::max(vars_.ts, vars_.reg[id_].ts);
        vars_.sns = std::max(vars_.sns, env.sns);
        return;
    case MsgKind::Write: {
        do_merge({env.reg});
        Envelope r;
        r.kind = MsgKind::WriteAck;
        r.reg = vars_.reg;
        reply_to(std::move(r));
        return;
    }
    case MsgKind::Snapshot: {
        do_merge({env.reg});
        Envelope r;
        r.kind = MsgKind::SnapshotAck;
        std::set<NodeId> seen;
        for (const auto& t : env.tasks) {
            if (t.node >= n_)
                continue;
            auto& p = vars_.pnd[t.node];
            if (p.sns < t.sns || (p.sns == t.sns && !p.vc && !p.fnl))
                p = PendingTask{t.sns, t.vc, std::nullopt};
        }
        for (const auto& t : env.tasks) {
            if (t.node >= n_ || !seen.insert(t.node).second)
                continue;
            const auto& p = vars_.pnd[t.node];
            if (p.fnl)
                r.saves.push_back({t.node, p.sns, *p.fnl});
        }
        r.reg = vars_.reg;
        r.ssn = env.ssn;
        reply_to(std::move(r));
        return;
    }
    case MsgKind::Save:
        apply_save(env, out, local);
        return;
    case MsgKind::SnapshotAck:
        if (!env.saves.empty()) {
            Envelope piggy = env;
            piggy.kind = MsgKind::Save;
            std::vector<TaskKey> keys;
            for (const auto& s : env.saves)
                keys.push_back({s.node, s.sns});
            piggy.tag = save_tag(keys);
            apply_save(piggy, out, local);
        }
        take_reply(env);
        return;
    case MsgKind::WriteAck:
    case MsgKind::SaveAck:
        take_reply(env);
        return;
    }
}

void SnapshotATNode::apply_save(const Envelope& env, Outbox& out, bool local)
{
    Envelope ack;
    ack.kind = MsgKind::SaveAck;
    ack.sender = id_;
    ack.receiver = env.sender;
    ack.tag = env.tag;
    for (const auto& s : env.saves) {
        if (s.node >= n_ || s.result.size() != n_)
            continue;
        auto& p = vars_.pnd[s.node];
        if (p.sns < s.sns || (p.sns == s.sns && !p.fnl)) {
            p.sns = s.sns;
            p.fnl = s.result;
        }
        ack.save_keys.push_back({s.node, s.sns});
    }
    std::sort(ack.save_keys.begin(), ack.save_keys.end());
    ack.save_keys.erase(std::unique(ack.save_keys.begin(), ack.save_keys.end()),
                        ack.save_keys.end());
    if (local) {
        out.local.push_back(ack);
        take_reply(ack);
    } else {
        out.sends.push_back(std::move(ack));
    }
}

void SnapshotATNode::take_reply(const Envelope& env)
{
    if (!round_)
        return;
    switch (env.kind) {
    case MsgKind::WriteAck:
        if (pc_ == Pc::WriteRound && array_leq(lreg_, env.reg))
            round_->record(env.sender, env);
        return;
    case MsgKind::SnapshotAck:
        if (pc_ == Pc::SnapshotRound && env.ssn == vars_.ssn)
            round_->record(env.sender, env);
        return;
    case MsgKind::SaveAck:
        if (pc_ == Pc::SaveRound && env.save_keys == save_keys_)
            round_->record(env.sender, env);
        return;
    default:
        return;
    }
}

} // namespace stabsnap
