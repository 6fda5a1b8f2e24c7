#pragma once

#include "stabsnap/comms.hpp"

#include <optional>

namespace stabsnap {

// Non-blocking snapshot object. With stabilizing off it behaves as the plain
// quorum-based double-collect algorithm: no gossip, no index repair.
class SnapshotNBNode : public Node {
public:
    SnapshotNBNode(NodeId id, std::size_t n, bool stabilizing = true);

    std::string algorithm() const override { return stabilizing_ ? "nb_selfstab" : "nb_baseline"; }

    void tick(Outbox& out) override;
    void deliver(const Envelope& env, Outbox& out) override;

    const NodeVars& vars() const override { return vars_; }
    NodeVars& vars_mut() override { return vars_; }

    std::vector<RegisterArray> held_arrays() const override;
    std::vector<std::uint64_t> held_ssns() const override;

    bool quiescent() const override { return !running(); }
    bool abort_operation() override;

    bool stabilizing() const { return stabilizing_; }

protected:
    bool running() const override { return op_.has_value(); }

private:
    struct ActiveOp {
        OpKind kind;
        RegisterArray lreg; // write: array broadcast; snapshot: prev
        QuorumRound round;
    };

    void start(const OpRequest& req, Outbox& out);
    void client_step(Outbox& out);
    void broadcast(Outbox& out, bool first);
    Envelope request_template() const;
    void serve(const Envelope& env, Outbox& out, bool local);
    void take_reply(const Envelope& env);
    void do_merge(const std::vector<RegisterArray>& rec);

    bool stabilizing_;
    NodeVars vars_;
    std::optional<ActiveOp> op_;
};

} // namespace stabsnap
