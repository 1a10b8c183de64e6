#include "soacomp/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace soacomp {

ConfigError::ConfigError(const std::string& what, std::string field, std::size_t line)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what
                              : (field.empty() ? what : field + ": " + what)),
      field_(std::move(field)),
      line_(line) {}

namespace {

class Reader {
 public:
  explicit Reader(std::filesystem::path base_dir) : base_dir_(std::move(base_dir)) {}

  Scenario read(const Json& root) {
    expect_object(root, "");
    only_keys(root, "", {"net", "topology", "features", "tasks"});
    Scenario sc;
    if (root.contains("net")) sc.net = read_net(root["net"], "net");

    const Json& topology = required(root, "", "topology");
    expect_array(topology, "topology");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < topology.size(); ++i) {
      std::string at = "topology[" + std::to_string(i) + "]";
      NodeDef node = read_node(topology[i], at);
      if (!ids.insert(node.id).second) fail(at + ".id", "duplicate node id '" + node.id + "'");
      sc.topology.push_back(std::move(node));
    }

    if (root.contains("features")) {
      const Json& features = root["features"];
      expect_array(features, "features");
      for (std::size_t i = 0; i < features.size(); ++i) {
        std::string at = "features[" + std::to_string(i) + "]";
        FeatureDirective f = read_feature(features[i], at);
        if (!ids.contains(f.node)) fail(at + ".node", "injection target '" + f.node + "' is not in the topology");
        sc.features.push_back(std::move(f));
      }
    }

    const Json& tasks = required(root, "", "tasks");
    expect_array(tasks, "tasks");
    std::set<std::string> task_ids;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      std::string at = "tasks[" + std::to_string(i) + "]";
      TaskDef t = read_task(tasks[i], at);
      if (!task_ids.insert(t.id).second) fail(at + ".id", "duplicate task id '" + t.id + "'");
      sc.tasks.push_back(std::move(t));
    }

    for (const auto& node : sc.net.unreachable) {
      if (!ids.contains(node)) fail("net.unreachable", "unknown node '" + node + "'");
    }
    for (const auto& [node, tick] : sc.net.outages) {
      if (!ids.contains(node)) fail("net.outages", "unknown node '" + node + "'");
    }
    return sc;
  }

 private:
  [[noreturn]] static void fail(const std::string& field, const std::string& msg) {
    throw ConfigError(msg, field);
  }

  static std::string join(const std::string& at, const std::string& key) {
    return at.empty() ? key : at + "." + key;
  }

  static void expect_object(const Json& j, const std::string& at) {
    if (!j.is_object()) fail(at, "expected an object");
  }
  static void expect_array(const Json& j, const std::string& at) {
    if (!j.is_array()) fail(at, "expected an array");
  }

  static void only_keys(const Json& j, const std::string& at, std::initializer_list<std::string_view> keys) {
    for (const auto& [k, v] : j.items()) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) fail(join(at, k), "unknown key");
    }
  }

  static const Json& required(const Json& j, const std::string& at, const char* key) {
    if (!j.contains(key)) fail(join(at, key), "missing");
    return j[key];
  }

  static std::string string_at(const Json& j, const std::string& at, const char* key) {
    const Json& v = required(j, at, key);
    if (!v.is_string()) fail(join(at, key), "expected a string");
    return v.get<std::string>();
  }

  static Tick tick_at(const Json& j, const std::string& at, const char* key, Tick fallback) {
    if (!j.contains(key)) return fallback;
    const Json& v = j[key];
    if (!v.is_number_integer() || v.get<Tick>() < 0) fail(join(at, key), "expected a tick >= 0");
    return v.get<Tick>();
  }

  static std::vector<ParamSpec> params(const Json& j, const std::string& at) {
    expect_array(j, at);
    std::vector<ParamSpec> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
      std::string p_at = at + "[" + std::to_string(i) + "]";
      expect_object(j[i], p_at);
      only_keys(j[i], p_at, {"name", "type"});
      std::string name = string_at(j[i], p_at, "name");
      std::string type = string_at(j[i], p_at, "type");
      auto t = parse_param_type(type);
      if (!t) fail(p_at + ".type", "unknown type '" + type + "'");
      out.push_back({std::move(name), *t});
    }
    return out;
  }

  static ValueMap values(const Json& j, const std::string& at) {
    expect_object(j, at);
    ValueMap out;
    for (const auto& [name, v] : j.items()) {
      try {
        out.emplace(name, Value::from_json(v));
      } catch (const std::invalid_argument& e) {
        fail(join(at, name), e.what());
      }
    }
    return out;
  }

  NetConfig read_net(const Json& j, const std::string& at) {
    expect_object(j, at);
    only_keys(j, at, {"latency_ticks", "seed", "jitter_ticks", "unreachable", "outages", "links"});
    NetConfig net;
    net.latency_ticks = tick_at(j, at, "latency_ticks", net.latency_ticks);
    net.jitter_ticks = tick_at(j, at, "jitter_ticks", 0);
    if (j.contains("seed")) {
      if (!j["seed"].is_number_integer()) fail(at + ".seed", "expected an integer");
      net.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("unreachable")) {
      expect_array(j["unreachable"], at + ".unreachable");
      for (const auto& id : j["unreachable"]) {
        if (!id.is_string()) fail(at + ".unreachable", "expected node ids");
        net.unreachable.insert(id.get<std::string>());
      }
    }
    if (j.contains("outages")) {
      expect_object(j["outages"], at + ".outages");
      for (const auto& [id, tick] : j["outages"].items()) {
        if (!tick.is_number_integer() || tick.get<Tick>() < 0) fail(at + ".outages." + id, "expected a tick >= 0");
        net.outages[id] = tick.get<Tick>();
      }
    }
    if (j.contains("links")) {
      const Json& links = j["links"];
      expect_array(links, at + ".links");
      for (std::size_t i = 0; i < links.size(); ++i) {
        std::string l_at = at + ".links[" + std::to_string(i) + "]";
        expect_object(links[i], l_at);
        only_keys(links[i], l_at, {"from", "to", "ticks"});
        net.links.push_back({string_at(links[i], l_at, "from"), string_at(links[i], l_at, "to"),
                             tick_at(links[i], l_at, "ticks", 0)});
      }
    }
    return net;
  }

  OperationImpl read_operation(const Json& j, const std::string& at) {
    expect_object(j, at);
    only_keys(j, at, {"name", "inputs", "outputs", "behavior"});
    OperationImpl impl;
    impl.signature.name = string_at(j, at, "name");
    impl.signature.inputs = j.contains("inputs") ? params(j["inputs"], at + ".inputs") : std::vector<ParamSpec>{};
    impl.signature.outputs = params(required(j, at, "outputs"), at + ".outputs");
    try {
      impl.behavior = make_behavior(required(j, at, "behavior"), base_dir_);
    } catch (const BehaviorError& e) {
      fail(at + ".behavior", e.what());
    }
    if (auto why = impl_problem(impl)) fail(at, *why);
    return impl;
  }

  std::vector<OperationImpl> read_operations(const Json& j, const std::string& at) {
    expect_array(j, at);
    std::vector<OperationImpl> ops;
    std::set<std::string> names;
    for (std::size_t i = 0; i < j.size(); ++i) {
      std::string o_at = at + "[" + std::to_string(i) + "]";
      OperationImpl impl = read_operation(j[i], o_at);
      if (!names.insert(impl.signature.name).second) {
        fail(o_at + ".name", "duplicate operation '" + impl.signature.name + "'");
      }
      ops.push_back(std::move(impl));
    }
    return ops;
  }

  NodeDef read_node(const Json& j, const std::string& at) {
    expect_object(j, at);
    only_keys(j, at, {"id", "operations"});
    NodeDef node;
    node.id = string_at(j, at, "id");
    if (!is_node_id(node.id)) fail(at + ".id", "'" + node.id + "' is not a node id ([a-z][a-z0-9]*)");
    if (j.contains("operations")) node.operations = read_operations(j["operations"], at + ".operations");
    return node;
  }

  FeatureDirective read_feature(const Json& j, const std::string& at) {
    expect_object(j, at);
    only_keys(j, at, {"at", "node", "module", "adds"});
    FeatureDirective f;
    f.at = tick_at(j, at, "at", 0);
    f.node = string_at(j, at, "node");
    f.module.module_name = string_at(j, at, "module");
    f.module.adds = read_operations(required(j, at, "adds"), at + ".adds");
    return f;
  }

  TaskDef read_task(const Json& j, const std::string& at) {
    expect_object(j, at);
    TaskDef t;
    t.id = string_at(j, at, "id");
    if (t.id.empty()) fail(at + ".id", "empty task id");
    t.at = tick_at(j, at, "at", 0);
    if (j.contains("invoke")) {
      only_keys(j, at, {"id", "at", "invoke"});
      const Json& inv = j["invoke"];
      std::string i_at = at + ".invoke";
      expect_object(inv, i_at);
      only_keys(inv, i_at, {"node", "op", "args"});
      RawInvoke raw;
      raw.node = string_at(inv, i_at, "node");
      raw.op = string_at(inv, i_at, "op");
      if (inv.contains("args")) raw.args = values(inv["args"], i_at + ".args");
      t.invoke = std::move(raw);
      return t;
    }
    only_keys(j, at, {"id", "at", "required_ops", "inputs", "expected_outputs"});
    t.spec.task_id = t.id;
    const Json& ops = required(j, at, "required_ops");
    expect_array(ops, at + ".required_ops");
    for (const auto& op : ops) {
      if (!op.is_string()) fail(at + ".required_ops", "expected operation names");
      t.spec.required_ops.push_back(op.get<std::string>());
    }
    if (j.contains("inputs")) {
      const Json& inputs = j["inputs"];
      t.args = values(inputs, at + ".inputs");
      for (const auto& [name, v] : inputs.items()) {
        t.spec.provided_inputs.push_back({name, t.args.at(name).type()});
      }
    }
    if (j.contains("expected_outputs")) {
      t.spec.expected_outputs = params(j["expected_outputs"], at + ".expected_outputs");
    }
    if (auto v = t.spec.violations(); !v.empty()) fail(at, v.front());
    return t;
  }

  std::filesystem::path base_dir_;
};

}  // namespace

Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') ++line;
    }
    throw ConfigError(e.what(), "", line);
  }
  return Reader(base_dir).read(root);
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read scenario '" + path.string() + "'", "");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.parent_path());
}

std::vector<ServiceDescriptor> descriptors_at(const Scenario& scenario, Tick tick) {
  std::map<std::string, ServiceDescriptor> nodes;
  for (const auto& def : scenario.topology) {
    ServiceDescriptor d{def.id, endpoint_for(def.id), {}};
    for (const auto& impl : def.operations) d.operations.push_back(impl.signature);
    nodes.emplace(def.id, std::move(d));
  }
  for (const auto& f : scenario.features) {
    if (f.at > tick) continue;
    auto it = nodes.find(f.node);
    if (it == nodes.end()) continue;
    ServiceDescriptor& d = it->second;
    std::set<std::string> names;
    for (const auto& op : d.operations) names.insert(op.name);
    bool ok = true;
    for (const auto& impl : f.module.adds) {
      if (!names.insert(impl.signature.name).second) ok = false;
    }
    if (!ok) continue;  // the live injection is rejected the same way
    for (const auto& impl : f.module.adds) d.operations.push_back(impl.signature);
  }
  std::vector<ServiceDescriptor> out;
  for (auto& [id, d] : nodes) out.push_back(std::move(d));
  return out;
}

}  // namespace soacomp
