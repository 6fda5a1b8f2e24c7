#include "stabsnap/comms.hpp"

namespace stabsnap {

const char* to_string(OpKind k) { return k == OpKind::Write ? "write" : "snapshot"; }

void QuorumRound::drop_if(const std::function<bool(const Envelope&)>& pred)
{
    std::erase_if(replies_, [&](const auto& kv) { return pred(kv.second); });
}

std::vector<RegisterArray> QuorumRound::arrays() const
{
    std::vector<RegisterArray> out;
    out.reserve(replies_.size());
    for (const auto& [_, env] : replies_)
        out.push_back(env.reg);
    return out;
}

std::vector<Envelope> fan_out(const Envelope& templ, NodeId self, std::size_t n)
{
    std::vector<Envelope> out;
    out.reserve(n);
    for (NodeId k = 0; k < n; ++k) {
        Envelope e = templ;
        e.sender = self;
        e.receiver = k;
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<Envelope> make_gossip(NodeId self, const NodeVars& vars)
{
    std::vector<Envelope> out;
    for (NodeId k = 0; k < vars.reg.size(); ++k) {
        if (k == self)
            continue;
        Envelope e;
        e.kind = MsgKind::Gossip;
        e.sender = self;
        e.receiver = k;
        e.entry = vars.reg[k];
        e.sns = k < vars.pnd.size() ? vars.pnd[k].sns : 0;
        out.push_back(std::move(e));
    }
    return out;
}

bool Node::invoke(OpRequest op)
{
    if (busy())
        return false;
    queued_ = std::move(op);
    return true;
}

} // namespace stabsnap
