#pragma once

#include "stabsnap/core.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stabsnap {

enum class MsgKind : std::uint8_t {
    Gossip,
    Write,
    WriteAck,
    Snapshot,
    SnapshotAck,
    Save,
    SaveAck,
};

constexpr std::size_t kMsgKinds = 7;

const char* to_string(MsgKind k);
MsgKind msg_kind_from_string(const std::string& s);

inline bool is_request(MsgKind k)
{
    return k == MsgKind::Write || k == MsgKind::Snapshot || k == MsgKind::Save;
}
inline bool is_reply(MsgKind k)
{
    return k == MsgKind::WriteAck || k == MsgKind::SnapshotAck || k == MsgKind::SaveAck;
}
MsgKind reply_kind(MsgKind request);
MsgKind request_kind(MsgKind reply);

struct TaskRecord {
    NodeId node = 0;
    std::uint64_t sns = 0;
    std::optional<VectorClock> vc;

    friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

struct SaveRecord {
    NodeId node = 0;
    std::uint64_t sns = 0;
    RegisterArray result;

    friend bool operator==(const SaveRecord&, const SaveRecord&) = default;
};

struct TaskKey {
    NodeId node = 0;
    std::uint64_t sns = 0;

    friend auto operator<=>(const TaskKey&, const TaskKey&) = default;
};

// Agreement state piggybacked on gossip while an index reset is under way.
struct ResetGossip {
    bool frozen = false;
    std::uint64_t epoch = 0;
    Timestamp max_ts = 0;
    std::uint64_t max_ssn = 0;
    std::uint64_t max_sns = 0;

    friend bool operator==(const ResetGossip&, const ResetGossip&) = default;
};

// A single wire message. Which payload fields are meaningful depends on kind.
struct Envelope {
    MsgKind kind = MsgKind::Gossip;
    NodeId sender = 0;
    NodeId receiver = 0;

    RegisterArray reg;              // Write, WriteAck, Snapshot, SnapshotAck
    RegisterEntry entry;            // Gossip: sender's copy of reg[receiver]
    std::uint64_t sns = 0;          // Gossip: sender's pndTsk[receiver].sns
    std::uint64_t ssn = 0;          // Snapshot, SnapshotAck
    std::vector<TaskRecord> tasks;  // Snapshot
    std::vector<SaveRecord> saves;  // Save, or piggybacked on SnapshotAck
    std::vector<TaskKey> save_keys; // SaveAck
    std::optional<ResetGossip> reset;

    // Round identifier shared by a request and its replies. Used by the
    // simulator for fairness and accounting only.
    std::uint64_t tag = 0;
    std::uint64_t seq = 0;

    friend bool operator==(const Envelope&, const Envelope&) = default;
};

std::uint64_t save_tag(const std::vector<TaskKey>& keys);

nlohmann::json to_json(const RegisterEntry& e);
nlohmann::json to_json(const RegisterArray& a);
nlohmann::json to_json(const Envelope& env);
RegisterEntry entry_from_json(const nlohmann::json& j);
RegisterArray array_from_json(const nlohmann::json& j);
Envelope envelope_from_json(const nlohmann::json& j);

} // namespace stabsnap
