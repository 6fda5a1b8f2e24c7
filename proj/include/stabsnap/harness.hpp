#pragma once

#include "stabsnap/checker.hpp"
#include "stabsnap/reset.hpp"

#include <iosfwd>

namespace stabsnap {

enum class Algorithm : std::uint8_t { NbSelfStab, NbBaseline, AtSelfStab };

const char* to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

std::vector<std::unique_ptr<Node>> make_nodes(Algorithm a, std::size_t n, std::uint64_t delta);

struct ScriptedOp {
    OpKind kind = OpKind::Write;
    std::uint64_t not_before = 0; // data step
};

// Ops of one node in order. Each starts once the previous one returned and
// the data step reached not_before.
struct NodeScript {
    NodeId node = 0;
    std::vector<ScriptedOp> ops;
};

// Closed loop: the next op is invoked think data steps after the previous
// one returned. count == 0 means unbounded.
struct ClosedLoop {
    NodeId node = 0;
    OpKind kind = OpKind::Write;
    std::uint64_t count = 0;
    std::uint64_t think = 0;
};

struct Workload {
    std::vector<NodeScript> scripts;
    std::vector<ClosedLoop> loops;
    // Hold every invocation until the audit has been clean for
    // Scenario::stable_cycles cycles.
    bool after_stabilization = false;
    std::uint64_t start_data_step = 0;
};

// Adversarial schedule that starves a non-blocking snapshot: each double
// collect of the snapshotter is made to straddle one complete write.
struct StarvationPlan {
    NodeId snapshotter = 0;
    NodeId writer = 1;
};

struct Scenario {
    std::string name = "scenario";
    Algorithm algorithm = Algorithm::NbSelfStab;
    std::uint64_t delta = 0;
    SimConfig sim;
    std::optional<TransientRecipe> transient;
    std::optional<StarvationPlan> starvation;
    Workload workload;

    std::uint64_t step_budget = 1'000'000;
    std::size_t min_cycles = 0;     // keep running at least this long
    std::size_t value_bytes = 8;
    std::size_t stable_cycles = 2;
    bool audit = true;              // audit after every step
    bool check = true;              // run the linearizability checker
    bool keep_trace = false;

    bool reset_enabled = false;
    ResetConfig reset;
};

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Scenario& s);
// Names: starvation, lone_snapshot, lone_write, steady_writer, convergence.
Scenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_names();

struct OpRecord {
    NodeId node = 0;
    OpKind kind = OpKind::Write;
    std::uint64_t invoke_step = 0;
    std::optional<std::uint64_t> respond_step;
    std::size_t latency_cycles = 0; // cycles the operation overlapped
};

// What one global reset did to the state.
struct ResetCheck {
    bool indices_zero = false;     // ts, ssn, sns, register ts and pnd cleared everywhere
    bool values_preserved = false; // every reg[k] holds the newest pre-reset value of k
    std::size_t busy_while_frozen = 0; // most operations running while the reset was pending
    std::size_t aborted = 0;
};

struct Report {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string algorithm;
    std::size_t n = 0;
    std::uint64_t delta = 0;
    std::string status; // complete, step_budget, deadlock

    std::uint64_t steps = 0;
    std::uint64_t data_steps = 0;
    std::size_t cycles = 0;

    bool audited = false;
    std::optional<std::uint64_t> stabilization_step;
    std::optional<std::size_t> stabilization_cycle;
    std::size_t audit_violations_at_end = 0;
    std::vector<Violation> final_violations; // first few, for diagnosis
    std::optional<std::uint64_t> workload_start_step;
    // Same node and timestamp with different values. Not part of the audit;
    // merges never repair these until the owner writes again.
    std::size_t ts_collisions_at_workload_start = 0;
    std::size_t ts_collisions_at_end = 0;

    std::vector<OpRecord> ops;
    std::size_t ops_invoked = 0;
    std::size_t ops_completed = 0;
    std::size_t max_write_cycles = 0;
    std::size_t max_snapshot_cycles = 0;

    MessageStats stats;
    double msgs_per_write = 0;
    double msgs_per_snapshot = 0;
    std::size_t gossip_pairs_min = 0;
    std::size_t gossip_pairs_max = 0;

    bool checked = false;
    Verdict verdict;

    std::size_t resets = 0;
    std::size_t aborts = 0;
    std::vector<ResetCheck> reset_checks;

    // Writes completed by a steady writer between consecutive write
    // operations that were blocked inside the snapshot procedure.
    std::size_t blocking_phases = 0;
    std::vector<std::size_t> writes_between_phases;

    std::string trace_digest;

    History history;
    std::vector<TraceRecord> trace;
    std::vector<std::uint64_t> cycle_boundaries;

    bool passed() const;
};

Report run_scenario(const Scenario& s);

// Runs the template once per value, overriding n or delta.
std::vector<Report> sweep(const Scenario& base, const std::string& axis,
                          const std::vector<std::uint64_t>& values);

nlohmann::json to_json(const Report& r);
std::string csv_header();
std::string to_csv_row(const Report& r);

// Least-squares slope of log(y) over log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Deterministic payload unique per (node, counter), at least 8 bytes.
Value workload_value(NodeId node, std::uint64_t counter, std::size_t bytes);

} // namespace stabsnap
