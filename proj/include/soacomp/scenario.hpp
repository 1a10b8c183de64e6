#pragma once

// Scenario documents: topology, timed feature injections, client tasks and
// network settings in one JSON file.
//
//   {
//     "net": {"latency_ticks": 1, "seed": 7, "jitter_ticks": 0,
//             "unreachable": ["server9"], "outages": {"server3": 12},
//             "links": [{"from": "client1", "to": "server2", "ticks": 4}]},
//     "topology": [{"id": "server2", "operations": [OPERATION, ...]}],
//     "features": [{"at": 5, "node": "server2", "module": "chem",
//                   "adds": [OPERATION, ...]}],
//     "tasks": [{"id": "t1", "at": 0, "required_ops": ["EngBooksSearch"],
//                "inputs": {"title": {"type": "text", "value": "Compilers"}},
//                "expected_outputs": [{"name": "price", "type": "real"}]},
//               {"id": "t2", "invoke": {"node": "server2", "op": "Foo",
//                                       "args": {...}}}]
//   }
//
//   OPERATION = {"name": ..., "inputs": [PARAM...], "outputs": [PARAM...],
//                "behavior": {"key": "catalog" | "affine", ...}}
//
// A task with "invoke" bypasses matchmaking and sends one raw InvokeRequest.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "soacomp/matchmaker.hpp"
#include "soacomp/node.hpp"
#include "soacomp/transport.hpp"

namespace soacomp {

struct NodeDef {
  std::string id;
  std::vector<OperationImpl> operations;
};

struct FeatureDirective {
  Tick at = 0;
  std::string node;
  FeatureModule module;
};

struct RawInvoke {
  std::string node;
  std::string op;
  ValueMap args;
};

struct TaskDef {
  std::string id;
  Tick at = 0;
  TaskSpec spec;    // matchmade tasks
  ValueMap args;    // values for spec.provided_inputs
  std::optional<RawInvoke> invoke;
};

struct Scenario {
  NetConfig net;
  std::vector<NodeDef> topology;
  std::vector<FeatureDirective> features;
  std::vector<TaskDef> tasks;
};

/// Invalid scenario. `line` is set for JSON syntax errors, `field` (a path
/// such as `tasks[2].id`) for content errors.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string field, std::size_t line = 0);
  const std::string& field() const { return field_; }
  std::size_t line() const { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

/// Signature of each node after applying every injection scheduled at or
/// before `tick` that would succeed, ordered by node id.
std::vector<ServiceDescriptor> descriptors_at(const Scenario& scenario, Tick tick);

}  // namespace soacomp
