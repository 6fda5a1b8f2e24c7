#pragma once

#include "stabsnap/comms.hpp"

#include <optional>
#include <set>

namespace stabsnap {

// Always-terminating snapshot object. Snapshot tasks are published in
// pndTsk; peers help a task once delta writes have happened since its
// vector clock was sampled.
class SnapshotATNode : public Node {
public:
    SnapshotATNode(NodeId id, std::size_t n, std::uint64_t delta);

    std::string algorithm() const override { return "at_selfstab"; }

    void tick(Outbox& out) override;
    void deliver(const Envelope& env, Outbox& out) override;

    const NodeVars& vars() const override { return vars_; }
    NodeVars& vars_mut() override { return vars_; }

    std::vector<RegisterArray> held_arrays() const override;
    std::vector<std::uint64_t> held_ssns() const override;

    bool quiescent() const override;
    bool abort_operation() override;

    std::uint64_t delta() const { return delta_; }
    const std::optional<Value>& write_pending() const { return write_pending_; }

    // Tasks k for which fnl is unset and helping is due, plus the own task.
    std::vector<TaskRecord> help_set() const;

    // True while inside the snapshot procedure.
    bool in_base_snapshot() const { return pc_ == Pc::SnapshotRound || pc_ == Pc::SaveRound; }
    // True while inside the snapshot procedure for someone else's task.
    bool helping_others() const;

protected:
    bool running() const override { return op_.has_value(); }

private:
    enum class Pc { Top, WriteRound, SnapshotRound, SaveRound };

    void run(Outbox& out);
    void housekeeping(Outbox& out);
    void snapshot_stage(Outbox& out);
    void begin_outer(Outbox& out);
    void after_inner(Outbox& out);
    void outer_until(Outbox& out);
    void end_iteration(Outbox& out);
    void poll_completion(Outbox& out);

    std::vector<TaskRecord> restrict_to_s(const std::vector<TaskRecord>& d) const;
    void send_round(const Envelope& templ, Outbox& out, bool first);
    Envelope write_request() const;
    Envelope snapshot_request() const;
    Envelope save_request() const;

    void serve(const Envelope& env, Outbox& out, bool local);
    void apply_save(const Envelope& env, Outbox& out, bool local);
    void take_reply(const Envelope& env);
    void do_merge(const std::vector<RegisterArray>& rec);

    std::uint64_t delta_;
    NodeVars vars_;
    std::optional<Value> write_pending_;
    std::optional<OpKind> op_;

    Pc pc_ = Pc::Top;
    RegisterArray lreg_;                // baseWrite broadcast array
    RegisterArray prev_;                // double-collect reference
    std::set<TaskKey> s_keys_;          // the set S of the running call
    std::vector<SaveRecord> save_set_;  // argument of the running safeReg
    std::vector<TaskKey> save_keys_;
    std::optional<QuorumRound> round_;
};

} // namespace stabsnap
