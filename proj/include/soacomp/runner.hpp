#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "soacomp/matchmaker.hpp"
#include "soacomp/scenario.hpp"
#include "soacomp/transport.hpp"

namespace soacomp {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kFault = 1;
inline constexpr int kNoMatch = 2;
inline constexpr int kConfig = 3;
inline constexpr int kCorruptLog = 4;
}  // namespace exit_code

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::size_t clients = 1;
  std::vector<std::string> fail_nodes;
  std::optional<Tick> latency;
  std::filesystem::path out_dir;  // empty: keep artifacts in memory only
};

struct TaskRecord {
  std::string task_id;
  std::string client;
  std::string kind;     // Direct | Composite | NoMatch | Invoke | NoProviders
  std::string outcome;  // ok | fault | nomatch
  std::string fault_code;
  std::string fault_cause;  // CompositionFault cause
  Tick issued = 0;
  Tick completed = 0;
  std::size_t envelopes = 0;              // excluding descriptor fetches
  std::size_t composition_envelopes = 0;  // node-to-peer InvokeRequests
  std::optional<Decision> decision;
  ValueMap results;
};

struct RunResult {
  int exit_code = exit_code::kOk;
  std::vector<TaskRecord> tasks;  // scenario order
  std::size_t injections_applied = 0;
  std::size_t injections_failed = 0;
  std::vector<TraceEntry> trace;
  std::string events_jsonl;
  std::string trace_jsonl;
  std::string node_trace_jsonl;
  Json metrics;
};

/// Executes every task at its issue tick over a fresh simulated network.
/// `clients` logical clients take tasks round-robin in issue order. Writes
/// events.jsonl, trace.jsonl, metrics.json and nodes.jsonl when `out_dir` is
/// set. Throws ConfigError for options that do not fit the scenario.
RunResult run_scenario(const Scenario& scenario, const RunOptions& options);

struct Divergence {
  std::uint64_t event_id = 0;
  std::string task_id;
  std::string reason;
  Json logged;
  Json replayed;
};

struct ReplayReport {
  std::size_t events = 0;
  std::vector<Divergence> divergences;
  std::vector<TriggerEvent> replayed;  // cause Replay

  Json to_json() const;
};

/// Re-decides every logged task against the scenario's descriptors as of the
/// event's logical time, restricted to the nodes the event considered.
ReplayReport replay(std::span<const TriggerEvent> events, const Scenario& scenario);

}  // namespace soacomp
