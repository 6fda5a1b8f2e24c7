#pragma once

#include "stabsnap/checker.hpp"

#include <algorithm>

namespace stabsnap {

struct ResetConfig {
    std::uint64_t maxint = 1ull << 20;
    // Cycles to wait for quiescence after every live node froze before the
    // running operations are aborted.
    std::size_t abort_after_cycles = 8;
    // Cycles the agreed maxima must stay unchanged before zeroing.
    std::size_t settle_cycles = 1;
};

// Global index reset. A node whose ts, ssn or sns reaches maxint freezes and
// announces it on gossip; peers freeze on receipt. Frozen nodes admit no new
// operations. Once every live node is frozen and idle and all agree on the
// index maxima for a full cycle, every index is set to zero while register
// values are kept.
class ResetController {
public:
    ResetController(World& w, ResetConfig cfg);

    // Installs the gossip hooks on the world.
    void attach();
    // Advances the freeze / agree / zero state machine. Call after each step.
    void after_step(const CycleDetector& cycles);

    static bool overflowed(const NodeVars& v, std::uint64_t maxint);

    bool in_progress() const { return std::any_of(frozen_.begin(), frozen_.end(), [](bool b) { return b; }); }
    std::size_t resets() const { return resets_; }
    std::size_t aborts() const { return aborts_; }
    std::uint64_t epoch() const { return epoch_; }

private:
    void freeze(NodeId i);
    void zero_all();
    ResetGossip local_view(NodeId i) const;

    World& w_;
    ResetConfig cfg_;
    std::vector<bool> frozen_;
    std::vector<ResetGossip> agreed_;
    std::uint64_t epoch_ = 0;
    std::optional<std::size_t> all_frozen_cycle_;
    std::optional<std::size_t> settled_cycle_;
    std::optional<ResetGossip> settled_view_;
    std::size_t resets_ = 0;
    std::size_t aborts_ = 0;
};

} // namespace stabsnap
