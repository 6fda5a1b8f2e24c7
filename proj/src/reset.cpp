#include "stabsnap/reset.hpp"

#include <algorithm>

namespace stabsnap {

ResetController::ResetController(World& w, ResetConfig cfg)
    : w_(w), cfg_(cfg), frozen_(w.size(), false), agreed_(w.size())
{
    if (cfg_.maxint == 0)
        throw ConfigError("maxint must be positive");
}

bool ResetController::overflowed(const NodeVars& v, std::uint64_t maxint)
{
    return v.ts >= maxint || v.ssn >= maxint || v.sns >= maxint;
}

ResetGossip ResetController::local_view(NodeId i) const
{
    ResetGossip g = agreed_[i];
    const auto& v = w_.node(i).vars();
    g.frozen = frozen_[i];
    g.epoch = epoch_;
    g.max_ts = std::max(g.max_ts, v.ts);
    g.max_ssn = std::max(g.max_ssn, v.ssn);
    g.max_sns = std::max(g.max_sns, v.sns);
    return g;
}

void ResetController::attach()
{
    w_.set_gossip_hooks(
        [this](NodeId i, Envelope& e) {
            if (frozen_[i])
                e.reset = local_view(i);
        },
        [this](NodeId dst, const Envelope& e) {
            if (!e.reset || !e.reset->frozen || e.reset->epoch != epoch_)
                return;
            if (!frozen_[dst])
                freeze(dst);
            auto& a = agreed_[dst];
            a.max_ts = std::max(a.max_ts, e.reset->max_ts);
            a.max_ssn = std::max(a.max_ssn, e.reset->max_ssn);
            a.max_sns = std::max(a.max_sns, e.reset->max_sns);
        });
}

void ResetController::freeze(NodeId i)
{
    frozen_[i] = true;
    w_.node(i).set_frozen(true);
    agreed_[i] = local_view(i);
    TraceRecord r;
    r.kind = TraceKind::Freeze;
    r.node = i;
    w_.emit(std::move(r));
}

void ResetController::after_step(const CycleDetector& cycles)
{
    const auto n = w_.size();
    for (NodeId i = 0; i < n; ++i)
        if (!frozen_[i] && !w_.crashed(i) && overflowed(w_.node(i).vars(), cfg_.maxint))
            freeze(i);

    bool all_frozen = true, any = false;
    for (NodeId i = 0; i < n; ++i) {
        if (w_.crashed(i))
            continue;
        any = true;
        all_frozen = all_frozen && frozen_[i];
    }
    if (!any || !all_frozen) {
        all_frozen_cycle_.reset();
        settled_cycle_.reset();
        return;
    }
    const auto now = cycles.cycles();
    if (!all_frozen_cycle_)
        all_frozen_cycle_ = now;

    bool idle = true;
    std::optional<ResetGossip> view;
    bool agree = true;
    for (NodeId i = 0; i < n; ++i) {
        if (w_.crashed(i))
            continue;
        idle = idle && w_.node(i).quiescent();
        auto v = local_view(i);
        v.frozen = true;
        if (!view)
            view = v;
        else
            agree = agree && *view == v;
    }

    if (!idle && now >= *all_frozen_cycle_ + cfg_.abort_after_cycles) {
        for (NodeId i = 0; i < n; ++i) {
            if (w_.crashed(i) || w_.node(i).quiescent())
                continue;
            if (w_.abort(i))
                ++aborts_;
        }
        idle = true;
        for (NodeId i = 0; i < n; ++i)
            if (!w_.crashed(i))
                idle = idle && w_.node(i).quiescent();
    }

    if (!idle || !agree) {
        settled_cycle_.reset();
        return;
    }
    if (!settled_cycle_ || settled_view_ != view) {
        settled_cycle_ = now;
        settled_view_ = view;
        return;
    }
    if (now >= *settled_cycle_ + cfg_.settle_cycles)
        zero_all();
}

void ResetController::zero_all()
{
    const auto n = w_.size();
    RegisterArray latest(n);
    for (NodeId j = 0; j < n; ++j)
        merge_into(latest, w_.node(j).vars().reg);
    for (NodeId j = 0; j < n; ++j) {
        auto& v = w_.node(j).vars_mut();
        v.ts = 0;
        v.ssn = 0;
        v.sns = 0;
        for (NodeId k = 0; k < n; ++k) {
            v.reg[k] = latest[k];
            v.reg[k].ts = 0;
        }
        for (auto& p : v.pnd)
            p = PendingTask{};
        w_.node(j).set_frozen(false);
    }
    w_.flush_channels();
    std::fill(frozen_.begin(), frozen_.end(), false);
    std::fill(agreed_.begin(), agreed_.end(), ResetGossip{});
    ++epoch_;
    ++resets_;
    all_frozen_cycle_.reset();
    settled_cycle_.reset();
    settled_view_.reset();
    TraceRecord r;
    r.kind = TraceKind::Reset;
    w_.emit(std::move(r));
}

} // namespace stabsnap
