#pragma once

#include "stabsnap/net_sim.hpp"

#include <iosfwd>
#include <set>
#include <tuple>

namespace stabsnap {

// ---- histories -------------------------------------------------------------

struct HistoryEvent {
    enum class Type : std::uint8_t { Invoke, Respond, Abort } type = Type::Invoke;
    NodeId node = 0;
    OpKind op = OpKind::Write;
    std::uint64_t step = 0;
    std::uint64_t data_step = 0;
    Value value;          // write invocations
    Timestamp ts = 0;     // write responses
    RegisterArray result; // snapshot responses

    friend bool operator==(const HistoryEvent&, const HistoryEvent&) = default;
};

struct Operation {
    NodeId node = 0;
    OpKind kind = OpKind::Write;
    Value value;
    std::size_t invoke = 0;                // index of the invocation event
    std::optional<std::size_t> respond;    // index of the response event
    bool aborted = false;
    RegisterArray result;
};

class History {
public:
    explicit History(std::size_t n = 0) : n_(n) {}

    std::size_t n() const { return n_; }

    // Throws std::logic_error on a response without a matching invocation
    // or a second invocation while one is open at the same node.
    void record(HistoryEvent e);
    // Adapter for simulator traces. Ignores non-operation records.
    void on_trace(const TraceRecord& r);

    const std::vector<HistoryEvent>& events() const { return events_; }
    std::vector<Operation> operations() const;
    std::size_t completed() const;

    void write_jsonl(std::ostream& os) const;
    static History read_jsonl(std::istream& is);

private:
    std::size_t n_;
    std::vector<HistoryEvent> events_;
    std::vector<std::optional<std::size_t>> open_;
};

nlohmann::json to_json(const HistoryEvent& e);
HistoryEvent history_event_from_json(const nlohmann::json& j);

// ---- linearizability -------------------------------------------------------

// A write that a snapshot returned although no operation in the history
// wrote it. Such values stem from the state before the history started and
// are modelled as writes ordered by timestamp that precede every real write
// of the same node.
struct LinOp {
    OpKind kind = OpKind::Write;
    NodeId node = 0;
    Value value;
    std::int64_t inv = 0;   // doubled event indices, see checker.cpp
    std::int64_t resp = 0;
    bool pre_history = false;
    Timestamp pre_ts = 0;
    std::size_t op_index = 0;     // into History::operations() for real ops
    std::vector<std::size_t> ver; // snapshot: returned version rank per node
    std::size_t rank = 0;         // write: version rank within its node
};

struct LinModel {
    std::size_t n = 0;
    std::vector<LinOp> ops;
    // chain[k][r - 1] is the op index of version r of node k.
    std::vector<std::vector<std::size_t>> chain;
    std::string error; // set when the history cannot be modelled at all
};

LinModel build_model(const History& h);

struct Verdict {
    bool ok = true;
    std::string method;
    std::vector<std::size_t> witness; // LinModel op indices in order
    std::string certificate;
    std::size_t ops = 0;
};

// Backtracking search. Throws std::length_error above max_ops operations.
Verdict check_exhaustive(const History& h, std::size_t max_ops = 24);
// Constraint graph plus topological sort.
Verdict check_polynomial(const History& h);
inline Verdict check_linearizable(const History& h) { return check_polynomial(h); }

// Replays a witness sequentially. Returns an empty string when valid.
std::string replay_witness(const LinModel& m, const std::vector<std::size_t>& order);

// ---- consistency audit -----------------------------------------------------

struct Violation {
    NodeId node = 0;
    std::string rule;
    std::string detail;
};

std::vector<Violation> audit_consistency(const World& w);
// Entries of the same node and timestamp that carry different values.
std::vector<std::string> find_ts_collisions(const World& w);

// ---- asynchronous cycles ---------------------------------------------------

// Greedy online cycle counter. A cycle closes at the first point where every
// live node has run a complete iteration that started inside the cycle: the
// iteration ended, each of its requests was answered or its round returned,
// and a gossip message of the node reached every live peer.
class CycleDetector {
public:
    CycleDetector(std::size_t n, bool require_gossip);

    void on(const TraceRecord& r);

    std::size_t cycles() const { return boundaries_.size(); }
    const std::vector<std::uint64_t>& boundaries() const { return boundaries_; }
    // Number of cycle boundaries strictly before step s.
    std::size_t cycle_of(std::uint64_t step) const;

private:
    struct Iter {
        bool ended = false;
        std::set<std::tuple<NodeId, MsgKind, std::uint64_t>> waiting;
        std::vector<bool> gossip_due;
        std::size_t gossip_left = 0;
    };

    void check(NodeId i, std::uint64_t step);
    void close_cycle(std::uint64_t step);

    std::size_t n_;
    bool require_gossip_;
    std::vector<bool> alive_;
    std::vector<bool> required_;
    std::vector<bool> done_;
    std::vector<std::vector<Iter>> open_;
    std::vector<std::uint64_t> boundaries_;
};

std::size_t count_async_cycles(const std::vector<TraceRecord>& trace, std::size_t n,
                               bool require_gossip = true);

} // namespace stabsnap
