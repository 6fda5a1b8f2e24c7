#include "stabsnap/message.hpp"

#include <algorithm>
#include <array>

namespace stabsnap {

namespace {

constexpr std::array<const char*, kMsgKinds> kKindNames = {
    "GOSSIP", "WRITE", "WRITEack", "SNAPSHOT", "SNAPSHOTack", "SAVE", "SAVEack"};

std::vector<std::uint8_t> bytes_from_hex(const std::string& s)
{
    if (s.size() % 2)
        throw std::invalid_argument("odd hex length");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9')
            return c - '0';
        if (c >= 'a' && c <= 'f')
            return c - 'a' + 10;
        if (c >= 'A' && c <= 'F')
            return c - 'A' + 10;
        throw std::invalid_argument("bad hex digit");
    };
    std::vector<std::uint8_t> out(s.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>(nib(s[2 * i]) << 4 | nib(s[2 * i + 1]));
    return out;
}

nlohmann::json vc_json(const std::optional<VectorClock>& vc)
{
    if (!vc)
        return nullptr;
    return *vc;
}

std::optional<VectorClock> vc_from(const nlohmann::json& j)
{
    if (j.is_null())
        return std::nullopt;
    return j.get<VectorClock>();
}

} // namespace

const char* to_string(MsgKind k) { return kKindNames.at(static_cast<std::size_t>(k)); }

MsgKind msg_kind_from_string(const std::string& s)
{
    for (std::size_t i = 0; i < kKindNames.size(); ++i)
        if (s == kKindNames[i])
            return static_cast<MsgKind>(i);
    throw std::invalid_argument("unknown message kind: " + s);
}

MsgKind reply_kind(MsgKind request)
{
    switch (request) {
    case MsgKind::Write:
        return MsgKind::WriteAck;
    case MsgKind::Snapshot:
        return MsgKind::SnapshotAck;
    case MsgKind::Save:
        return MsgKind::SaveAck;
    default:
        throw std::invalid_argument("not a request kind");
    }
}

MsgKind request_kind(MsgKind reply)
{
    switch (reply) {
    case MsgKind::WriteAck:
        return MsgKind::Write;
    case MsgKind::SnapshotAck:
        return MsgKind::Snapshot;
    case MsgKind::SaveAck:
        return MsgKind::Save;
    default:
        throw std::invalid_argument("not a reply kind");
    }
}

std::uint64_t save_tag(const std::vector<TaskKey>& keys)
{
    auto sorted = keys;
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    for (const auto& k : sorted) {
        mix(k.node);
        mix(k.sns);
    }
    return h;
}

nlohmann::json to_json(const RegisterEntry& e)
{
    nlohmann::json j;
    j["v"] = e.value ? nlohmann::json(e.value->hex()) : nlohmann::json(nullptr);
    j["ts"] = e.ts;
    return j;
}

nlohmann::json to_json(const RegisterArray& a)
{
    auto j = nlohmann::json::array();
    for (const auto& e : a.entries())
        j.push_back(to_json(e));
    return j;
}

RegisterEntry entry_from_json(const nlohmann::json& j)
{
    RegisterEntry e;
    if (!j.at("v").is_null())
        e.value = Value(bytes_from_hex(j.at("v").get<std::string>()));
    e.ts = j.at("ts").get<Timestamp>();
    return e;
}

RegisterArray array_from_json(const nlohmann::json& j)
{
    std::vector<RegisterEntry> es;
    for (const auto& x : j)
        es.push_back(entry_from_json(x));
    return RegisterArray(std::move(es));
}

nlohmann::json to_json(const Envelope& env)
{
    nlohmann::json j;
    j["kind"] = to_string(env.kind);
    j["from"] = env.sender;
    j["to"] = env.receiver;
    j["tag"] = env.tag;
    j["seq"] = env.seq;
    switch (env.kind) {
    case MsgKind::Gossip:
        j["entry"] = to_json(env.entry);
        j["sns"] = env.sns;
        if (env.reset) {
            const auto& r = *env.reset;
            j["reset"] = {{"frozen", r.frozen}, {"epoch", r.epoch}, {"ts", r.max_ts},
                          {"ssn", r.max_ssn}, {"sns", r.max_sns}};
        }
        break;
    case MsgKind::Write:
    case MsgKind::WriteAck:
        j["reg"] = to_json(env.reg);
        break;
    case MsgKind::Snapshot:
    case MsgKind::SnapshotAck:
        j["reg"] = to_json(env.reg);
        j["ssn"] = env.ssn;
        break;
    default:
        break;
    }
    if (!env.tasks.empty()) {
        auto ts = nlohmann::json::array();
        for (const auto& t : env.tasks)
            ts.push_back({{"node", t.node}, {"sns", t.sns}, {"vc", vc_json(t.vc)}});
        j["tasks"] = ts;
    }
    if (!env.saves.empty()) {
        auto ss = nlohmann::json::array();
        for (const auto& s : env.saves)
            ss.push_back({{"node", s.node}, {"sns", s.sns}, {"result", to_json(s.result)}});
        j["saves"] = ss;
    }
    if (!env.save_keys.empty()) {
        auto ks = nlohmann::json::array();
        for (const auto& k : env.save_keys)
            ks.push_back({k.node, k.sns});
        j["keys"] = ks;
    }
    return j;
}

Envelope envelope_from_json(const nlohmann::json& j)
{
    Envelope env;
    env.kind = msg_kind_from_string(j.at("kind").get<std::string>());
    env.sender = j.at("from").get<NodeId>();
    env.receiver = j.at("to").get<NodeId>();
    env.tag = j.value("tag", std::uint64_t{0});
    env.seq = j.value("seq", std::uint64_t{0});
    if (j.contains("entry"))
        env.entry = entry_from_json(j["entry"]);
    env.sns = j.value("sns", std::uint64_t{0});
    env.ssn = j.value("ssn", std::uint64_t{0});
    if (j.contains("reg"))
        env.reg = array_from_json(j["reg"]);
    if (j.contains("reset")) {
        const auto& r = j["reset"];
        env.reset = ResetGossip{r.at("frozen").get<bool>(), r.at("epoch").get<std::uint64_t>(),
                                r.at("ts").get<Timestamp>(), r.at("ssn").get<std::uint64_t>(),
                                r.at("sns").get<std::uint64_t>()};
    }
    if (j.contains("tasks"))
        for (const auto& t : j["tasks"])
            env.tasks.push_back({t.at("node").get<NodeId>(), t.at("sns").get<std::uint64_t>(),
                                 vc_from(t.at("vc"))});
    if (j.contains("saves"))
        for (const auto& s : j["saves"])
            env.saves.push_back({s.at("node").get<NodeId>(), s.at("sns").get<std::uint64_t>(),
                                 array_from_json(s.at("result"))});
    if (j.contains("keys"))
        for (const auto& k : j["keys"])
            env.save_keys.push_back({k.at(0).get<NodeId>(), k.at(1).get<std::uint64_t>()});
    return env;
}

} // namespace stabsnap
