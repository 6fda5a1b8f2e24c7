#pragma once

#include "stabsnap/message.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stabsnap {

inline std::size_t majority(std::size_t n) { return n / 2 + 1; }

enum class OpKind : std::uint8_t { Write, Snapshot };

const char* to_string(OpKind k);

struct OpRequest {
    OpKind kind = OpKind::Write;
    Value value;
};

enum class NodeEventKind : std::uint8_t {
    IterationStart,
    IterationEnd,
    RoundDone,
    Respond,
};

struct NodeEvent {
    NodeEventKind kind = NodeEventKind::IterationStart;
    MsgKind msg = MsgKind::Write; // RoundDone: request kind of the round
    std::uint64_t tag = 0;
    OpKind op = OpKind::Write;    // Respond
    Timestamp ts = 0;             // Respond to a write
    RegisterArray result;         // Respond to a snapshot
};

// Everything a node produced during one step.
struct Outbox {
    std::vector<Envelope> sends;  // addressed to other nodes
    std::vector<Envelope> local;  // handled in place by the sender itself
    std::vector<NodeEvent> events;

    void clear()
    {
        sends.clear();
        local.clear();
        events.clear();
    }
};

// Collects replies for one broadcast round, one per distinct sender. A newer
// reply from the same sender replaces the older one.
class QuorumRound {
public:
    QuorumRound(MsgKind request, std::uint64_t tag, std::size_t n)
        : request_(request), tag_(tag), n_(n)
    {
    }

    MsgKind request() const { return request_; }
    std::uint64_t tag() const { return tag_; }

    void record(NodeId from, Envelope reply) { replies_[from] = std::move(reply); }
    void drop_if(const std::function<bool(const Envelope&)>& pred);

    std::size_t count() const { return replies_.size(); }
    bool has_majority() const { return replies_.size() >= majority(n_); }
    std::vector<RegisterArray> arrays() const;
    const std::map<NodeId, Envelope>& replies() const { return replies_; }

private:
    MsgKind request_;
    std::uint64_t tag_;
    std::size_t n_;
    std::map<NodeId, Envelope> replies_;
};

// Builds a message addressed from self to every other node, and a copy to
// self for in-place handling.
std::vector<Envelope> fan_out(const Envelope& templ, NodeId self, std::size_t n);

// One gossip envelope per peer k carrying reg[k], and pndTsk[k].sns when the
// variant keeps pending tasks.
std::vector<Envelope> make_gossip(NodeId self, const NodeVars& vars);

// Common node interface driven by the simulator.
class Node {
public:
    Node(NodeId id, std::size_t n) : id_(id), n_(n) {}
    virtual ~Node() = default;

    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    NodeId id() const { return id_; }
    std::size_t size() const { return n_; }

    virtual std::string algorithm() const = 0;

    // One local step: the scheduler granted this node the processor.
    virtual void tick(Outbox& out) = 0;
    virtual void deliver(const Envelope& env, Outbox& out) = 0;

    // Queues a client operation. Returns false if one is already queued or
    // running. Queued operations start at a later tick unless frozen.
    bool invoke(OpRequest op);
    bool busy() const { return queued_.has_value() || running(); }
    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }

    virtual const NodeVars& vars() const = 0;
    virtual NodeVars& vars_mut() = 0;

    // Reply arrays and ssns held by an open round, for the consistency audit.
    virtual std::vector<RegisterArray> held_arrays() const { return {}; }
    virtual std::vector<std::uint64_t> held_ssns() const { return {}; }

    // No operation and no protocol round in progress.
    virtual bool quiescent() const = 0;
    // Drops the running operation. Returns true if there was one.
    virtual bool abort_operation() = 0;

protected:
    virtual bool running() const = 0;
    std::optional<OpRequest> take_queued()
    {
        if (frozen_ || !queued_)
            return std::nullopt;
        auto op = std::move(queued_);
        queued_.reset();
        return op;
    }

    NodeId id_;
    std::size_t n_;

private:
    std::optional<OpRequest> queued_;
    bool frozen_ = false;
};

} // namespace stabsnap
