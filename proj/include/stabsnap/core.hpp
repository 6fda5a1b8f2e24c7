#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stabsnap {

using NodeId = std::uint32_t;
using Timestamp = std::uint64_t;

// Opaque register payload. Compared bytewise.
struct Value {
    std::vector<std::uint8_t> bytes;

    Value() = default;
    explicit Value(std::vector<std::uint8_t> b) : bytes(std::move(b)) {}

    static Value from_string(const std::string& s);
    std::string hex() const;

    friend auto operator<=>(const Value&, const Value&) = default;
    friend bool operator==(const Value&, const Value&) = default;
};

// One SWMR slot. A missing value is the initial bottom entry.
struct RegisterEntry {
    std::optional<Value> value;
    Timestamp ts = 0;

    static RegisterEntry bottom() { return {}; }
    bool is_bottom() const { return !value.has_value(); }

    friend bool operator==(const RegisterEntry&, const RegisterEntry&) = default;
};

// Entries are ordered by timestamp only.
inline bool entry_leq(const RegisterEntry& a, const RegisterEntry& b) { return a.ts <= b.ts; }

// Ties keep the first argument.
inline const RegisterEntry& entry_max(const RegisterEntry& a, const RegisterEntry& b)
{
    return b.ts > a.ts ? b : a;
}

class RegisterArray {
public:
    RegisterArray() = default;
    explicit RegisterArray(std::size_t n) : entries_(n) {}
    explicit RegisterArray(std::vector<RegisterEntry> e) : entries_(std::move(e)) {}

    std::size_t size() const { return entries_.size(); }
    RegisterEntry& operator[](std::size_t k) { return entries_.at(k); }
    const RegisterEntry& operator[](std::size_t k) const { return entries_.at(k); }
    const std::vector<RegisterEntry>& entries() const { return entries_; }

    friend bool operator==(const RegisterArray&, const RegisterArray&) = default;

private:
    std::vector<RegisterEntry> entries_;
};

// Pointwise order. Throws on length mismatch.
bool array_leq(const RegisterArray& a, const RegisterArray& b);

// a := pointwise max(a, b), ties keep a.
void merge_into(RegisterArray& a, const RegisterArray& b);

using VectorClock = std::vector<Timestamp>;

VectorClock vector_clock(const RegisterArray& reg);
bool vc_leq(const VectorClock& a, const VectorClock& b);

// Sum over max(0, hi[k] - lo[k]), saturating at UINT64_MAX.
std::uint64_t vc_distance(const VectorClock& hi, const VectorClock& lo);

// Local part of a node shared by every variant: the write index and the
// local register copy.
struct ProtocolCore {
    NodeId self = 0;
    Timestamp ts = 0;
    RegisterArray reg;

    ProtocolCore() = default;
    ProtocolCore(NodeId id, std::size_t n) : self(id), reg(n) {}
};

// Folds the received arrays into reg. With repair_ts set the local write
// index is lifted to cover every entry attributed to self.
void merge(ProtocolCore& core, std::span<const RegisterArray> received, bool repair_ts = true);

// Pending snapshot task record kept per node.
struct PendingTask {
    std::uint64_t sns = 0;
    std::optional<VectorClock> vc;
    std::optional<RegisterArray> fnl;

    friend bool operator==(const PendingTask&, const PendingTask&) = default;
};

// Every protocol variable a node carries. Variants leave the fields they do
// not use at their defaults (sns = 0, pnd empty).
struct NodeVars {
    Timestamp ts = 0;
    std::uint64_t ssn = 0;
    std::uint64_t sns = 0;
    RegisterArray reg;
    std::vector<PendingTask> pnd;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string to_string(const RegisterEntry& e);
std::string to_string(const RegisterArray& a);

} // namespace stabsnap
