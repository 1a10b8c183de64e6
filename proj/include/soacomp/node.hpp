#pragma once

// Server runtime: a node owns a registry of operations, answers descriptor
// fetches and invocations, coordinates composite tasks by visiting peers,
// and accepts feature modules that add operations while it runs.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "soacomp/behavior.hpp"
#include "soacomp/descriptor.hpp"
#include "soacomp/matchmaker.hpp"
#include "soacomp/transport.hpp"

namespace soacomp {

struct OperationImpl {
  OperationSignature signature;
  BehaviorPtr behavior;
};

/// Reason `impl` is unusable (null behavior, outputs mismatch, ...).
std::optional<std::string> impl_problem(const OperationImpl& impl);

struct FeatureModule {
  std::string module_name;
  std::vector<OperationImpl> adds;
};

class NodeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class CollisionError : public NodeError {
 public:
  explicit CollisionError(std::string op)
      : NodeError("operation '" + op + "' already exists"), op_(std::move(op)) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

class ValidationError : public NodeError {
  using NodeError::NodeError;
};

struct PlanStep {
  std::string target;  // node id
  OperationSignature signature;

  const std::string& op() const { return signature.name; }
  friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

struct CompositionPlan {
  std::string task_id;
  std::string coordinator;
  std::vector<PlanStep> local_steps;   // run after every remote step
  std::vector<PlanStep> remote_steps;  // run first, in order

  friend bool operator==(const CompositionPlan&, const CompositionPlan&) = default;
};

class PlanError : public std::runtime_error {
 public:
  explicit PlanError(std::string op)
      : std::runtime_error("no node can run '" + op + "'"), op_(std::move(op)) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

/// Assigns each required op, in task order: to the coordinator when it hosts
/// it, otherwise to the smallest-id peer advertising it whose inputs are
/// satisfiable from provided inputs and outputs of steps that run earlier.
/// Remote steps run before local ones. Throws PlanError.
CompositionPlan plan_composition(const TaskSpec& task, const ServiceDescriptor& coordinator,
                                 std::span<const ServiceDescriptor> peers);

struct SubInvocation {
  std::string target;
  std::string op;
  ValueMap args;
};

struct FaultInfo {
  std::string code;
  std::string message;
  Json detail = Json::object();
};

/// Values or a fault.
struct InvokeResult {
  ValueMap values;
  std::optional<FaultInfo> fault;

  bool ok() const { return !fault.has_value(); }
};

class CompositionFault : public std::runtime_error {
 public:
  CompositionFault(std::string op, std::string cause, const std::string& message)
      : std::runtime_error("step '" + op + "' failed with " + cause + ": " + message),
        op_(std::move(op)),
        cause_(std::move(cause)) {}
  const std::string& op() const { return op_; }
  const std::string& cause() const { return cause_; }

 private:
  std::string op_;
  std::string cause_;
};

/// JSON-lines sink shared by nodes: `{tick, node, kind, op, detail}`.
class NodeTrace {
 public:
  void append(Tick tick, const std::string& node, std::string_view kind, const std::string& op,
              const std::string& detail);
  std::vector<Json> entries() const;
  std::string jsonl() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Json> entries_;
};

class Node {
 public:
  using Clock = std::function<Tick()>;

  /// Throws ValidationError for a bad id or operation set.
  Node(std::string id, std::vector<OperationImpl> operations = {},
       std::shared_ptr<NodeTrace> trace = std::make_shared<NodeTrace>());

  const std::string& id() const { return id_; }

  /// Registers this node's handler on `net` and takes the network clock.
  void attach(Network& net);
  void set_clock(Clock clock);

  ServiceDescriptor descriptor() const;
  std::uint64_t registry_version() const;

  std::string handle_get_descriptor() const;

  /// Runs one local operation. Peers never delegate further.
  InvokeResult invoke(const std::string& op, const ValueMap& args) const;
  /// Envelope form of `invoke`.
  Envelope handle_invoke(const Envelope& request) const;

  /// Visitor entry point used by coordinators.
  InvokeResult accept(const SubInvocation& visit) const;

  /// Plans against this node's registry and the given peers.
  CompositionPlan plan(const TaskSpec& task, std::span<const ServiceDescriptor> peers) const;

  /// Remote steps over `net` (exactly one InvokeRequest each), then local
  /// steps. Result keys are `<op>.<output>`. Throws CompositionFault.
  ValueMap execute_plan(const CompositionPlan& plan, const ValueMap& args, Network* net) const;

  /// Coordinator role for a client task envelope: fetch peer descriptors if
  /// something is not local, plan, execute. One registry snapshot serves the
  /// whole request.
  Envelope handle_task(const Envelope& request, Network* net) const;

  /// Dispatches any envelope addressed to this node.
  Envelope handle(const Envelope& request, Network* net) const;

  /// Atomically extends the registry. Throws CollisionError or
  /// ValidationError and leaves the registry untouched on failure.
  ServiceDescriptor inject_feature(const FeatureModule& fm);

  const std::shared_ptr<NodeTrace>& trace() const { return trace_; }

 private:
  struct Registry;
  using Snapshot = std::shared_ptr<const Registry>;

  Snapshot snapshot() const;
  InvokeResult invoke_on(const Registry& reg, const std::string& op, const ValueMap& args) const;
  ValueMap execute_on(const Registry& reg, const CompositionPlan& plan, const ValueMap& args,
                      Network* net) const;
  Tick now() const;

  std::string id_;
  std::shared_ptr<NodeTrace> trace_;
  Clock clock_;
  mutable std::atomic<Tick> own_clock_{0};

  mutable std::mutex snapshot_mutex_;
  std::mutex inject_mutex_;
  Snapshot registry_;
};

}  // namespace soacomp
