#include "stabsnap/snapshot_nb.hpp"

#include <algorithm>

namespace stabsnap {

SnapshotNBNode::SnapshotNBNode(NodeId id, std::size_t n, bool stabilizing)
    : Node(id, n), stabilizing_(stabilizing)
{
    vars_.reg = RegisterArray(n);
}

std::vector<RegisterArray> SnapshotNBNode::held_arrays() const
{
    if (!op_)
        return {};
    auto out = op_->round.arrays();
    out.push_back(op_->lreg);
    return out;
}

std::vector<std::uint64_t> SnapshotNBNode::held_ssns() const
{
    std::vector<std::uint64_t> out;
    if (op_ && op_->kind == OpKind::Snapshot)
        for (const auto& [_, env] : op_->round.replies())
            out.push_back(env.ssn);
    return out;
}

bool SnapshotNBNode::abort_operation()
{
    bool had = op_.has_value();
    op_.reset();
    return had;
}

void SnapshotNBNode::do_merge(const std::vector<RegisterArray>& rec)
{
    ProtocolCore core{id_, n_};
    core.ts = vars_.ts;
    core.reg = std::move(vars_.reg);
    merge(core, rec, stabilizing_);
    vars_.ts = core.ts;
    vars_.reg = std::move(core.reg);
}

void SnapshotNBNode::tick(Outbox& out)
{
    out.events.push_back({NodeEventKind::IterationStart});
    if (stabilizing_) {
        if (op_ && op_->kind == OpKind::Snapshot)
            op_->round.drop_if([this](const Envelope& e) { return e.ssn != vars_.ssn; });
        vars_.ts = std::max(vars_.ts, vars_.reg[id_].ts);
        for (auto& g : make_gossip(id_, vars_))
            out.sends.push_back(std::move(g));
    }
    if (!op_) {
        if (auto req = take_queued())
            start(*req, out);
    } else {
        client_step(out);
    }
    out.events.push_back({NodeEventKind::IterationEnd});
}

void SnapshotNBNode::start(const OpRequest& req, Outbox& out)
{
    if (req.kind == OpKind::Write) {
        vars_.ts += 1;
        vars_.reg[id_] = RegisterEntry{req.value, vars_.ts};
        op_.emplace(ActiveOp{OpKind::Write, vars_.reg, QuorumRound(MsgKind::Write, vars_.ts, n_)});
    } else {
        vars_.ssn += 1;
        op_.emplace(ActiveOp{OpKind::Snapshot, vars_.reg,
                             QuorumRound(MsgKind::Snapshot, vars_.ssn, n_)});
    }
    broadcast(out, true);
}

Envelope SnapshotNBNode::request_template() const
{
    Envelope e;
    if (op_->kind == OpKind::Write) {
        e.kind = MsgKind::Write;
        e.reg = op_->lreg;
        e.tag = op_->round.tag();
    } else {
        e.kind = MsgKind::Snapshot;
        e.reg = vars_.reg;
        e.ssn = vars_.ssn;
        e.tag = vars_.ssn;
    }
    return e;
}

// The first broadcast of a round also handles the request locally; later
// ones only retransmit to the peers.
void SnapshotNBNode::broadcast(Outbox& out, bool first)
{
    auto msgs = fan_out(request_template(), id_, n_);
    for (auto& m : msgs) {
        if (m.receiver != id_) {
            out.sends.push_back(std::move(m));
        } else if (first) {
            out.local.push_back(m);
            serve(m, out, true);
        }
    }
}

void SnapshotNBNode::client_step(Outbox& out)
{
    if (!op_->round.has_majority()) {
        broadcast(out, false);
        return;
    }
    auto rec = op_->round.arrays();
    out.events.push_back({NodeEventKind::RoundDone, op_->round.request(), op_->round.tag()});
    do_merge(rec);
    if (op_->kind == OpKind::Write) {
        NodeEvent ev{NodeEventKind::Respond};
        ev.op = OpKind::Write;
        ev.ts = op_->lreg[id_].ts;
        out.events.push_back(std::move(ev));
        op_.reset();
        return;
    }
    if (op_->lreg == vars_.reg) {
        NodeEvent ev{NodeEventKind::Respond};
        ev.op = OpKind::Snapshot;
        ev.result = vars_.reg;
        out.events.push_back(std::move(ev));
        op_.reset();
        return;
    }
    vars_.ssn += 1;
    op_->lreg = vars_.reg;
    op_->round = QuorumRound(MsgKind::Snapshot, vars_.ssn, n_);
    broadcast(out, true);
}

void SnapshotNBNode::deliver(const Envelope& env, Outbox& out)
{
    if (env.kind != MsgKind::Gossip && env.reg.size() != n_)
        return;
    serve(env, out, false);
}

void SnapshotNBNode::serve(const Envelope& env, Outbox& out, bool local)
{
    switch (env.kind) {
    case MsgKind::Gossip:
        if (stabilizing_) {
            vars_.reg[id_] = entry_max(vars_.reg[id_], env.entry);
            vars_.ts = std::max(vars_.ts, vars_.reg[id_].ts);
        }
        return;
    case MsgKind::Write:
    case MsgKind::Snapshot: {
        do_merge({env.reg});
        Envelope reply;
        reply.kind = reply_kind(env.kind);
        reply.sender = id_;
        reply.receiver = env.sender;
        reply.reg = vars_.reg;
        reply.ssn = env.ssn;
        reply.tag = env.tag;
        if (local) {
            out.local.push_back(reply);
            take_reply(reply);
        } else {
            out.sends.push_back(std::move(reply));
        }
        return;
    }
    case MsgKind::WriteAck:
    case MsgKind::SnapshotAck:
        take_reply(env);
        return;
    default:
        return;
    }
}

void SnapshotNBNode::take_reply(const Envelope& env)
{
    if (!op_)
        return;
    if (env.kind == MsgKind::WriteAck && op_->kind == OpKind::Write) {
        if (array_leq(op_->lreg, env.reg))
            op_->round.record(env.sender, env);
    } else if (env.kind == MsgKind::SnapshotAck && op_->kind == OpKind::Snapshot) {
        if (env.ssn == vars_.ssn)
            op_->round.record(env.sender, env);
    }
}

} // namespace stabsnap
