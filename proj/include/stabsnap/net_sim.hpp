#pragma once

#include "stabsnap/comms.hpp"

#include <json.hpp>

#include <array>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace stabsnap {

// Bounded FIFO link. Pushing into a full channel evicts the oldest message.
class Channel {
public:
    explicit Channel(std::size_t capacity = 8) : capacity_(capacity) {}

    std::optional<Envelope> push(Envelope e);
    Envelope take(std::size_t idx);
    void clear() { buf_.clear(); }

    bool empty() const { return buf_.empty(); }
    std::size_t size() const { return buf_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Envelope& at(std::size_t idx) const { return buf_.at(idx); }
    const std::deque<Envelope>& buffer() const { return buf_; }

private:
    std::size_t capacity_;
    std::deque<Envelope> buf_;
};

struct CrashEvent {
    NodeId node = 0;
    std::uint64_t at_data_step = 0;
    bool resume = false;
};

struct FaultPlan {
    double drop_rate = 0.0;
    double dup_rate = 0.0;
    bool reorder = false;
    // A logical message is never dropped more than this many times in a row.
    std::uint32_t fairness_cap = 10;
    std::vector<CrashEvent> crashes;
    // Permits crashing a majority. Rounds then block forever.
    bool allow_quorum_loss = false;
};

enum class Policy : std::uint8_t { Random, RoundRobin };

struct SimConfig {
    std::size_t n = 3;
    std::size_t capacity = 8;
    Policy policy = Policy::Random;
    // Probability that a step is spent on the gossip lane when it has mail.
    double gossip_share = 0.3;
    // Probability that a non-gossip step is a node tick rather than a delivery.
    double tick_share = 0.4;
    std::uint64_t seed = 1;
    FaultPlan faults;
};

enum class TraceKind : std::uint8_t {
    Invoke,
    Respond,
    Abort,
    IterationStart,
    IterationEnd,
    RoundDone,
    Send,
    Deliver,
    Drop,
    Duplicate,
    Evict,
    Crash,
    Resume,
    Freeze,
    Reset,
    Corrupt,
};

const char* to_string(TraceKind k);

struct TraceRecord {
    TraceKind kind = TraceKind::Send;
    std::uint64_t step = 0;
    std::uint64_t data_step = 0;
    NodeId node = 0;  // acting node, or sender for message records
    NodeId peer = 0;  // receiver for message records
    MsgKind msg = MsgKind::Gossip;
    std::uint64_t tag = 0;
    std::uint64_t seq = 0;
    bool in_tick = false;
    OpKind op = OpKind::Write;
    Value value;
    Timestamp ts = 0;
    RegisterArray result;
};

nlohmann::json to_json(const TraceRecord& r);

struct SchedEvent {
    enum class Type : std::uint8_t { Tick, Deliver } type = Type::Tick;
    NodeId node = 0; // ticking node or receiver
    NodeId src = 0;  // sender channel for deliveries
};

struct MessageStats {
    std::array<std::uint64_t, kMsgKinds> sent{};      // envelopes put on the wire
    std::array<std::uint64_t, kMsgKinds> logical{};   // distinct (src, dst, kind, tag)
    std::array<std::uint64_t, kMsgKinds> delivered{};
    std::array<std::uint64_t, kMsgKinds> dropped{};
    std::array<std::uint64_t, kMsgKinds> duplicated{};
    std::array<std::uint64_t, kMsgKinds> evicted{};

    std::uint64_t total_logical_ops() const;
};

// Transient fault description. Field paths look like node.2.ssn,
// node.0.reg.1, node.0.reg.1.ts, node.3.pnd.1.vc.
struct FieldAssignment {
    std::string path;
    nlohmann::json value;
};

struct RandomCorruption {
    std::uint64_t max_index = 4096;
    double channel_fill = 0.5;
    std::size_t max_garbage = 4;
    bool forge_tasks = true;
};

struct TransientRecipe {
    std::vector<FieldAssignment> assignments;
    std::vector<Envelope> forged;
    std::optional<RandomCorruption> random;
    std::uint64_t seed = 0;
};

class World {
public:
    using Filter = std::function<std::vector<SchedEvent>(const World&, std::vector<SchedEvent>)>;
    using Listener = std::function<void(const TraceRecord&)>;
    using PreTick = std::function<void(World&, NodeId)>;
    using GossipHook = std::function<void(NodeId, Envelope&)>;
    using GossipSeen = std::function<void(NodeId, const Envelope&)>;

    World(SimConfig cfg, std::vector<std::unique_ptr<Node>> nodes);

    std::size_t size() const { return nodes_.size(); }
    const SimConfig& config() const { return cfg_; }
    Node& node(NodeId i) { return *nodes_.at(i); }
    const Node& node(NodeId i) const { return *nodes_.at(i); }

    bool crashed(NodeId i) const { return crashed_.at(i); }
    std::size_t crashed_count() const;
    void crash(NodeId i);
    void resume(NodeId i);

    std::uint64_t steps() const { return step_; }
    std::uint64_t data_steps() const { return data_step_; }

    // Hands an operation to node i and records the invocation.
    bool invoke(NodeId i, OpRequest op);
    // Drops the running operation of node i. Returns true if there was one.
    bool abort(NodeId i);

    // Runs one scheduler step. Returns false when no event is enabled.
    bool step();
    std::vector<SchedEvent> enabled_events() const;

    void set_filter(Filter f) { filter_ = std::move(f); }
    void set_pre_tick(PreTick f) { pre_tick_ = std::move(f); }
    void set_gossip_hooks(GossipHook decorate, GossipSeen seen)
    {
        gossip_decorate_ = std::move(decorate);
        gossip_seen_ = std::move(seen);
    }
    void add_listener(Listener l) { listeners_.push_back(std::move(l)); }
    void emit(TraceRecord r);

    const Channel& data_channel(NodeId src, NodeId dst) const { return data_.at(src * size() + dst); }
    const Channel& gossip_channel(NodeId src, NodeId dst) const
    {
        return gossip_.at(src * size() + dst);
    }
    Channel& data_channel_mut(NodeId src, NodeId dst) { return data_.at(src * size() + dst); }
    void for_each_in_flight(const std::function<void(const Envelope&)>& fn) const;
    void flush_channels();

    // Overwrites state. Only allowed before the first step unless midrun.
    void inject_transient(const TransientRecipe& recipe, bool midrun = false);

    const MessageStats& stats() const { return stats_; }

private:
    struct LogicalKey {
        NodeId src, dst;
        MsgKind kind;
        std::uint64_t tag;
        friend bool operator==(const LogicalKey&, const LogicalKey&) = default;
    };
    struct KeyHash {
        std::size_t operator()(const LogicalKey& k) const noexcept;
    };

    void tick(NodeId i);
    void deliver(NodeId src, NodeId dst, bool gossip_lane);
    void process(NodeId i, Outbox& out, bool in_tick);
    void count_logical(const Envelope& e);
    void apply_schedule();
    void apply_assignment(const FieldAssignment& a);
    void apply_random(const RandomCorruption& rc, std::uint64_t seed);

    SimConfig cfg_;
    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<bool> crashed_;
    std::vector<Channel> data_;
    std::vector<Channel> gossip_;
    std::mt19937_64 rng_;
    std::mt19937_64 gossip_rng_;
    std::uint64_t step_ = 0;
    std::uint64_t data_step_ = 0;
    std::uint64_t seq_ = 0;
    std::size_t rr_cursor_ = 0;
    std::vector<bool> schedule_done_;

    std::unordered_map<LogicalKey, std::uint32_t, KeyHash> drops_in_row_;
    std::unordered_set<LogicalKey, KeyHash> seen_;
    MessageStats stats_;

    Filter filter_;
    PreTick pre_tick_;
    GossipHook gossip_decorate_;
    GossipSeen gossip_seen_;
    std::vector<Listener> listeners_;
};

} // namespace stabsnap
