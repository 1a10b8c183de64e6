#pragma once

// Client-side decision stack: the fixed rules that score a descriptor
// against a task, the inference step that turns scores into a Decision, the
// trigger that opens an event for each request, and the append-only
// repository of decided events.

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "soacomp/descriptor.hpp"
#include "soacomp/transport.hpp"
#include "soacomp/value.hpp"

namespace soacomp {

struct TaskSpec {
  std::string task_id;
  std::vector<std::string> required_ops;
  std::vector<ParamSpec> provided_inputs;
  std::vector<ParamSpec> expected_outputs;  // carried, never scored

  /// Human-readable invariant violations; empty when valid.
  std::vector<std::string> violations() const;

  Json to_json() const;
  /// Throws std::invalid_argument on shape errors.
  static TaskSpec from_json(const Json& j);

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct MatchScore {
  std::string descriptor_name;
  std::vector<std::string> covered_ops;  // in required_ops order
  std::vector<bool> input_ok;            // parallel to covered_ops
  std::size_t satisfied = 0;             // coverage numerator
  std::size_t required = 0;              // coverage denominator

  bool complete() const { return required > 0 && satisfied == required; }
  std::vector<std::string> satisfied_ops() const;

  Json to_json() const;
  static MatchScore from_json(const Json& j);

  friend bool operator==(const MatchScore&, const MatchScore&) = default;
};

enum class DecisionKind { Direct, Composite, NoMatch };

std::string_view to_string(DecisionKind k);

struct Decision {
  DecisionKind kind = DecisionKind::NoMatch;
  std::string provider;     // Direct only
  std::string coordinator;  // Composite only
  std::vector<MatchScore> scores;

  /// Provider for Direct, coordinator for Composite, empty otherwise.
  const std::string& chosen() const;

  Json to_json() const;
  static Decision from_json(const Json& j);

  friend bool operator==(const Decision&, const Decision&) = default;
};

/// FixedRules: an operation is covered when the descriptor has one with the
/// exact name; its inputs are satisfied when every input (name, type) is
/// among the task's provided inputs.
MatchScore evaluate_rules(const TaskSpec& task, const ServiceDescriptor& d);

/// Direct when some descriptor covers everything (smallest name wins);
/// Composite when the union of satisfied operations covers the task
/// (coordinator: highest coverage, then smallest name); NoMatch otherwise.
/// The result does not depend on the order of `descriptors`.
Decision decide(const TaskSpec& task, std::span<const ServiceDescriptor> descriptors);

enum class Cause { ClientRequest, Replay };

std::string_view to_string(Cause c);

struct TriggerEvent {
  std::uint64_t event_id = 0;
  Tick logical_time = 0;
  Cause cause = Cause::ClientRequest;
  TaskSpec task;
  std::vector<std::string> considered;
  std::vector<std::string> skipped;  // nodes that did not answer the broadcast
  std::optional<Decision> result;

  Json to_json() const;
  static TriggerEvent from_json(const Json& j);

  friend bool operator==(const TriggerEvent&, const TriggerEvent&) = default;
};

/// Opens trigger events with strictly increasing ids. Thread-safe.
class Trigger {
 public:
  using Clock = std::function<Tick()>;

  /// Without a clock, logical time advances by one per raised event.
  explicit Trigger(std::uint64_t first_event_id = 1, Clock clock = {});

  TriggerEvent raise(const TaskSpec& task, std::span<const ServiceDescriptor> descriptors,
                     Cause cause = Cause::ClientRequest);

 private:
  std::mutex mutex_;
  std::uint64_t next_id_;
  Tick counter_ = 0;
  Clock clock_;
};

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class CorruptLog : public std::runtime_error {
 public:
  CorruptLog(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Append-only JSON-lines store of decided events.
///
/// Lines are committed in event_id order: a caller whose predecessor id has
/// not been written yet waits for it (bounded), so concurrent clients that
/// raise through one Trigger always produce a strictly increasing file.
class TriggerRepository {
 public:
  /// In-memory only.
  TriggerRepository();
  /// Appends to `path`, creating it. `truncate` starts a fresh log.
  explicit TriggerRepository(std::filesystem::path path, bool truncate = false);

  /// Id the next raised event should carry to keep the file monotone.
  std::uint64_t next_event_id() const;

  /// Writes one line and flushes. Throws IoError, or std::invalid_argument
  /// for an event without a result or with a non-increasing id.
  void record(const TriggerEvent& e);

  /// Every line written through this repository, in order.
  std::vector<std::string> lines() const;
  std::string jsonl() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable turn_;
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  std::uint64_t last_written_ = 0;
  std::vector<std::string> lines_;
};

/// Events in file order. Throws IoError or CorruptLog (parse failure or
/// non-increasing event_id, with the offending line number).
std::vector<TriggerEvent> load_events(const std::filesystem::path& path);
std::vector<TriggerEvent> parse_events(std::string_view jsonl);

class NoProviders : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SkipRecord {
  std::string node;
  std::string reason;
};

struct GatherResult {
  std::vector<ServiceDescriptor> descriptors;  // node id ascending
  std::vector<SkipRecord> skipped;
};

/// Broadcasts GetDescriptor to every registered node. Throws NoProviders when
/// nothing usable came back.
GatherResult gather_descriptors(const std::string& client_id, Network& net);

/// ClientAPI: one request is gather, trigger, decide, record, then a single
/// task envelope to the chosen provider or coordinator.
class ClientApi {
 public:
  ClientApi(std::string client_id, Network& net, Trigger& trigger, TriggerRepository& repo);

  struct Outcome {
    TriggerEvent event;
    std::optional<Envelope> reply;  // absent for NoMatch
  };

  Outcome request(const TaskSpec& task, const ValueMap& args);

  const std::string& id() const { return client_id_; }

 private:
  std::string client_id_;
  Network& net_;
  Trigger& trigger_;
  TriggerRepository& repo_;
};

/// Body of the envelope a client sends to a provider or coordinator.
Json task_request_body(const TaskSpec& task, const ValueMap& args);

}  // namespace soacomp
