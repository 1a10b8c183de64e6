#pragma once
// Test helpers: value builders, generators and reference oracles.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "soacomp/behavior.hpp"
#include "soacomp/descriptor.hpp"
#include "soacomp/matchmaker.hpp"
#include "soacomp/node.hpp"

namespace testkit {

using namespace soacomp;

inline std::filesystem::path fixtures() { return SOACOMP_TEST_FIXTURES; }
inline std::filesystem::path scenarios() { return SOACOMP_SCENARIOS; }

inline ParamSpec p(std::string name, ParamType t) { return {std::move(name), t}; }

inline OperationSignature sig(std::string name, std::vector<ParamSpec> in, std::vector<ParamSpec> out) {
  return {std::move(name), std::move(in), std::move(out)};
}

inline ServiceDescriptor desc(const std::string& id, std::vector<OperationSignature> ops) {
  return {id, endpoint_for(id), std::move(ops)};
}

inline TaskSpec task(std::string id, std::vector<std::string> ops, std::vector<ParamSpec> inputs = {}) {
  TaskSpec t;
  t.task_id = std::move(id);
  t.required_ops = std::move(ops);
  t.provided_inputs = std::move(inputs);
  return t;
}

inline std::vector<CatalogRow> eng_rows() {
  return {{"Compilers", 20, 450.0, true}, {"Operating Systems", 12, 380.5, true}, {"Digital Logic", 30, 210.0, false}};
}

inline OperationImpl book_search(const std::string& name, std::vector<CatalogRow> rows) {
  return {sig(name, {p("title", ParamType::Text)},
              {p("value", ParamType::Flag), p("date", ParamType::Integer), p("price", ParamType::Real)}),
          make_catalog_behavior(std::move(rows))};
}

// ---------------------------------------------------------------------------
// Generators

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t next() { return rng_(); }
  std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(rng_() % n); }
  bool coin() { return (rng_() & 1U) != 0; }
  template <typename T>
  const T& pick(const std::vector<T>& v) { return v[below(v.size())]; }

  ParamType type() {
    static const std::vector<ParamType> all{ParamType::Text, ParamType::Integer, ParamType::Real, ParamType::Flag,
                                            ParamType::Date};
    return pick(all);
  }

  std::string ident(std::size_t max_len = 8) {
    static const std::string head = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
    static const std::string tail = head + "0123456789_";
    std::string s(1, head[below(head.size())]);
    std::size_t n = below(max_len);
    for (std::size_t i = 0; i < n; ++i) s += tail[below(tail.size())];
    return s;
  }

  std::string node_id() {
    static const std::string head = "abcdefghijklmnopqrstuvwxyz";
    static const std::string tail = head + "0123456789";
    std::string s(1, head[below(head.size())]);
    std::size_t n = below(7);
    for (std::size_t i = 0; i < n; ++i) s += tail[below(tail.size())];
    return s;
  }

  std::vector<ParamSpec> params(std::size_t min, std::size_t max) {
    std::vector<ParamSpec> out;
    std::set<std::string> used;
    std::size_t n = min + below(max - min + 1);
    while (out.size() < n) {
      std::string name = ident();
      if (used.insert(name).second) out.push_back({name, type()});
    }
    return out;
  }

  /// Valid by construction.
  ServiceDescriptor descriptor() {
    ServiceDescriptor d;
    std::string id = node_id();
    d.service_name = coin() ? id : ident();
    d.endpoint = endpoint_for(id);
    std::set<std::string> names;
    std::size_t n = below(6);
    while (d.operations.size() < n) {
      std::string name = ident();
      if (!names.insert(name).second) continue;
      d.operations.push_back({name, params(0, 4), params(1, 4)});
    }
    return d;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), rng_);
  }

 private:
  std::mt19937_64 rng_;
};

/// A case for the matchmaker: a small universe of op names and input params,
/// descriptors drawn over it so that matches and near misses are common.
struct MatchCase {
  TaskSpec task;
  std::vector<ServiceDescriptor> descriptors;
};

inline MatchCase match_case(Gen& g) {
  static const std::vector<std::string> ops{"opA", "opB", "opC", "opD", "opE", "opF", "opG"};
  static const std::vector<ParamSpec> universe{{"title", ParamType::Text},   {"title", ParamType::Integer},
                                               {"qty", ParamType::Integer},  {"when", ParamType::Date},
                                               {"price", ParamType::Real},   {"gift", ParamType::Flag}};
  MatchCase c;
  std::vector<std::string> pool = ops;
  g.shuffle(pool);
  std::size_t nreq = 1 + g.below(5);
  c.task.task_id = "t";
  c.task.required_ops.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(nreq));
  std::set<std::string> seen;
  for (const auto& prm : universe) {
    if (g.below(3) != 0 && seen.insert(prm.name).second) c.task.provided_inputs.push_back(prm);
  }

  std::size_t nd = 1 + g.below(6);
  std::set<std::string> names;
  while (c.descriptors.size() < nd) {
    std::string name = "s" + std::to_string(g.below(9));
    if (!names.insert(name).second) continue;
    ServiceDescriptor d{name, endpoint_for(name), {}};
    // mostly required ops, some distractors
    std::vector<std::string> mine;
    for (const auto& op : ops) {
      bool wanted = std::find(c.task.required_ops.begin(), c.task.required_ops.end(), op) != c.task.required_ops.end();
      if (g.below(10) < (wanted ? 5u : 1u)) mine.push_back(op);
    }
    g.shuffle(mine);
    for (std::size_t i = 0; i < mine.size(); ++i) {
      OperationSignature s{mine[i], {}, {{"out", ParamType::Text}}};
      std::set<std::string> in_names;
      std::size_t ni = g.below(4) == 0 ? 2 : g.below(2);
      for (std::size_t j = 0; j < ni; ++j) {
        const ParamSpec& prm = g.pick(universe);
        if (in_names.insert(prm.name).second) s.inputs.push_back(prm);
      }
      d.operations.push_back(std::move(s));
    }
    c.descriptors.push_back(std::move(d));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Oracles

struct OracleDecision {
  DecisionKind kind = DecisionKind::NoMatch;
  std::string who;  // provider or coordinator
};

/// Direct reading of the selection rules; no shared code with the engine.
inline OracleDecision oracle_decide(const TaskSpec& t, const std::vector<ServiceDescriptor>& ds) {
  auto serves = [&](const ServiceDescriptor& d, const std::string& op) {
    for (const auto& o : d.operations) {
      if (o.name != op) continue;
      for (const auto& in : o.inputs) {
        bool found = false;
        for (const auto& have : t.provided_inputs) found = found || (have.name == in.name && have.type == in.type);
        if (!found) return false;
      }
      return true;
    }
    return false;
  };
  auto count = [&](const ServiceDescriptor& d) {
    std::size_t n = 0;
    for (const auto& op : t.required_ops) n += serves(d, op) ? 1 : 0;
    return n;
  };

  OracleDecision out;
  for (const auto& d : ds) {
    if (count(d) == t.required_ops.size() && (out.who.empty() || d.service_name < out.who)) {
      out.kind = DecisionKind::Direct;
      out.who = d.service_name;
    }
  }
  if (out.kind == DecisionKind::Direct) return out;

  for (const auto& op : t.required_ops) {
    bool any = false;
    for (const auto& d : ds) any = any || serves(d, op);
    if (!any) return {};
  }
  out.kind = DecisionKind::Composite;
  std::size_t best = 0;
  for (const auto& d : ds) {
    std::size_t c = count(d);
    if (out.who.empty() || c > best || (c == best && d.service_name < out.who)) {
      best = c;
      out.who = d.service_name;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random topologies for composition checks

struct Topology {
  std::vector<std::pair<std::string, std::vector<OperationImpl>>> nodes;  // id ascending
  TaskSpec task;
  ValueMap args;
  std::map<std::string, std::string> host;  // op -> node
};

/// Parameter pool with one fixed type per name, so every step stays
/// satisfiable whatever ran before it.
inline const std::vector<ParamSpec>& param_pool() {
  static const std::vector<ParamSpec> pool{{"qty", ParamType::Integer}, {"cost", ParamType::Real},
                                           {"ok", ParamType::Flag},     {"label", ParamType::Text},
                                           {"due", ParamType::Date}};
  return pool;
}

inline OperationImpl random_affine_op(Gen& g, const std::string& name) {
  const auto& pool = param_pool();
  OperationSignature s;
  s.name = name;
  for (const auto& prm : pool) {
    if (g.below(2)) s.inputs.push_back(prm);
  }
  std::vector<AffineRule> rules;
  std::vector<ParamSpec> outs = pool;
  g.shuffle(outs);
  outs.resize(1 + g.below(3));
  for (const auto& o : outs) {
    AffineRule r;
    r.output = o.name;
    r.type = o.type;
    std::vector<std::string> sources;
    for (const auto& in : s.inputs) {
      bool fits = false;
      switch (o.type) {
        case ParamType::Integer:
        case ParamType::Date: fits = in.type == ParamType::Integer || in.type == ParamType::Date; break;
        case ParamType::Real: fits = in.type != ParamType::Text && in.type != ParamType::Flag; break;
        case ParamType::Flag: fits = in.type != ParamType::Text; break;
        case ParamType::Text: fits = in.type == ParamType::Text; break;
      }
      if (fits) sources.push_back(in.name);
    }
    if (!sources.empty() && g.below(4) != 0) r.from = g.pick(sources);
    if (o.type == ParamType::Integer || o.type == ParamType::Date) {
      r.scale = static_cast<double>(static_cast<int>(g.below(5)) - 2);
      r.offset = static_cast<double>(g.below(20));
    } else if (o.type == ParamType::Real) {
      r.scale = 0.5 * static_cast<double>(g.below(5));
      r.offset = 0.25 * static_cast<double>(g.below(9));
    } else if (o.type == ParamType::Flag) {
      r.scale = g.coin() ? 1.0 : -1.0;
      r.offset = static_cast<double>(g.below(10));
    } else {
      r.prefix = name + ":";
    }
    rules.push_back(std::move(r));
    s.outputs.push_back(o);
  }
  return {std::move(s), make_affine_behavior(std::move(rules))};
}

/// Up to 4 nodes and 6 operations in total, op names distinct across nodes.
inline Topology random_topology(Gen& g) {
  Topology t;
  std::size_t n_nodes = 1 + g.below(4);
  std::size_t n_ops = 1 + g.below(6);
  for (std::size_t i = 0; i < n_nodes; ++i) t.nodes.push_back({"n" + std::to_string(i + 1), {}});
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n_ops; ++i) {
    std::string name = "op" + std::to_string(i + 1);
    auto& node = t.nodes[g.below(n_nodes)];
    node.second.push_back(random_affine_op(g, name));
    t.host[name] = node.first;
    names.push_back(name);
  }
  g.shuffle(names);
  names.resize(1 + g.below(names.size()));
  t.task.task_id = "rt";
  t.task.required_ops = names;
  t.task.provided_inputs = param_pool();
  t.args = {{"qty", Value::integer(static_cast<std::int64_t>(g.below(50)))},
            {"cost", Value::real(0.5 * static_cast<double>(g.below(100)))},
            {"ok", Value::flag(g.coin())},
            {"label", Value::text("item" + std::to_string(g.below(10)))},
            {"due", Value::date(static_cast<std::int64_t>(g.below(400)))}};
  return t;
}

/// Reference execution: steps not hosted by `coordinator` first, then the
/// coordinator's own, each in task order, every op run directly on its host
/// with the values known so far.
inline ValueMap direct_oracle(const Topology& t, const std::string& coordinator,
                              const std::map<std::string, const Node*>& nodes) {
  ValueMap env = t.args;
  ValueMap out;
  auto run = [&](const std::string& op) {
    InvokeResult r = nodes.at(t.host.at(op))->invoke(op, env);
    if (!r.ok()) throw std::runtime_error("oracle step " + op + " faulted: " + r.fault->code);
    for (const auto& [k, v] : r.values) {
      env[k] = v;
      out[op + "." + k] = v;
    }
  };
  for (const auto& op : t.task.required_ops) {
    if (t.host.at(op) != coordinator) run(op);
  }
  for (const auto& op : t.task.required_ops) {
    if (t.host.at(op) == coordinator) run(op);
  }
  return out;
}

inline std::string name_of(DecisionKind k) { return std::string(to_string(k)); }

}  // namespace testkit
