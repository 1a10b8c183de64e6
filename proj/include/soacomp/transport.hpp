#pragma once

// Deterministic in-process network.
//
// Time is a logical tick counter owned by a single event loop (`run`). Work
// is carried by processes: each client, each injection directive and each
// fan-out branch of a broadcast is a process running on its own thread, but
// only the process the loop has woken executes at any moment. A process gives
// the baton back whenever it waits on the network, so handlers interleave at
// envelope granularity and the loop always advances to the earliest pending
// (tick, request_id). Identical inputs therefore yield identical traces.

#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "soacomp/value.hpp"

namespace soacomp {

using Tick = std::int64_t;

enum class EnvelopeKind { GetDescriptor, InvokeRequest, InvokeResponse, Fault };

std::string_view to_string(EnvelopeKind k);

/// Fault codes carried in Fault envelope bodies.
namespace fault {
inline constexpr std::string_view kPeerUnreachable = "PeerUnreachable";
inline constexpr std::string_view kUnknownOperation = "UnknownOperation";
inline constexpr std::string_view kTypeMismatch = "TypeMismatch";
inline constexpr std::string_view kInternal = "Internal";
inline constexpr std::string_view kPlanError = "PlanError";
inline constexpr std::string_view kCompositionFault = "CompositionFault";
}  // namespace fault

struct Envelope {
  EnvelopeKind kind = EnvelopeKind::InvokeRequest;
  std::uint64_t request_id = 0;  // 0: assigned by the network on send
  std::string sender;
  std::string target;
  Json body = Json::object();

  bool is_fault() const { return kind == EnvelopeKind::Fault; }
  /// Fault code, empty for other kinds.
  std::string fault_code() const;
};

/// A Fault answering `request`. `extra` keys are appended to the body.
Envelope make_fault(const Envelope& request, std::string_view code, std::string message,
                    const Json& extra = Json::object());
/// An InvokeResponse answering `request`.
Envelope make_response(const Envelope& request, Json body);

struct LinkLatency {
  std::string from;
  std::string to;
  Tick ticks = 0;
};

struct NetConfig {
  Tick latency_ticks = 1;           // default for every directed link
  std::vector<LinkLatency> links;   // per-link overrides
  std::set<std::string> unreachable;
  std::map<std::string, Tick> outages;  // node unreachable from the given tick on
  std::uint64_t seed = 0;
  Tick jitter_ticks = 0;  // extra [0, jitter] ticks per hop, drawn from seed
};

class TransportError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class DuplicateNode : public TransportError {
  using TransportError::TransportError;
};

struct TraceEntry {
  Tick tick = 0;
  Envelope envelope;
  std::string tag;  // attribution of the process that carried it

  Json to_json() const;
};

struct BroadcastResult {
  std::string node;
  std::optional<std::string> wsdl;  // empty: skipped
  std::string skip_reason;
};

class Network {
 public:
  using Handler = std::function<Envelope(const Envelope& request)>;

  explicit Network(NetConfig config = {});
  ~Network();

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  /// Throws DuplicateNode.
  void register_node(const std::string& id, Handler handler);
  /// Registered ids, ascending.
  std::vector<std::string> node_ids() const;

  /// Runtime reachability override, on top of the configured failures.
  void set_unreachable(const std::string& id, bool unreachable);

  /// Schedules `body` as a new process starting at `start`. Thread-safe;
  /// the process runs once `run` drives the loop past `start`.
  void spawn(std::string tag, Tick start, std::function<void()> body);

  /// Drives the loop until every process finished. Rethrows the first
  /// exception a process let escape.
  void run();

  /// Delivers a request after the link latency and returns the reply, which
  /// itself travels back with latency. Unreachable or unregistered targets
  /// yield Fault(PeerUnreachable). Outside a process this runs a private loop.
  Envelope send(Envelope request);

  /// One GetDescriptor per registered node not in `exclude`, issued
  /// concurrently. Results ordered by node id.
  std::vector<BroadcastResult> broadcast_get_descriptors(const std::string& sender,
                                                         const std::set<std::string>& exclude = {});

  /// Runs `branches` as concurrent child processes and waits for all.
  void fork_join(std::vector<std::function<void()>> branches);

  /// Suspends the calling process until `tick`. No-op outside a process.
  void sleep_until(Tick tick);

  Tick now() const;

  /// Attribution tag of the calling process (children inherit it).
  void set_tag(std::string tag);

  std::vector<TraceEntry> trace() const;
  std::size_t trace_size() const;
  /// One JSON object per line, `{tick, request_id, kind, sender, target, body}`.
  std::string trace_jsonl() const;

 private:
  struct Process;
  struct Event {
    Tick tick;
    std::uint64_t key;
    std::uint64_t seq;
    Process* process;
    bool operator>(const Event& o) const {
      if (tick != o.tick) return tick > o.tick;
      if (key != o.key) return key > o.key;
      return seq > o.seq;
    }
  };

  Process* current() const;
  Process* spawn_locked(std::string tag, Tick start, std::function<void()> body, Process* parent);
  void schedule_locked(Tick tick, std::uint64_t key, Process* p);
  void yield_until(Tick tick, std::uint64_t key);
  void park_locked(std::unique_lock<std::mutex>& lock, Process* p);
  void thread_main(Process* p);
  Tick hop_locked(const std::string& from, const std::string& to);
  bool reachable_locked(const std::string& id) const;
  void record_locked(const Envelope& env);

  NetConfig config_;
  mutable std::mutex mutex_;
  std::condition_variable loop_cv_;
  std::map<std::string, Handler> handlers_;
  std::set<std::string> runtime_unreachable_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::vector<std::unique_ptr<Process>> processes_;
  Process* running_ = nullptr;
  bool loop_active_ = false;
  bool shutting_down_ = false;
  std::size_t live_ = 0;
  Tick tick_ = 0;
  std::uint64_t next_request_id_ = 1;
  std::uint64_t next_seq_ = 0;
  std::mt19937_64 rng_;
  std::vector<TraceEntry> trace_;
};

}  // namespace soacomp
