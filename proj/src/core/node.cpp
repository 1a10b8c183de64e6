#include "soacomp/node.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace soacomp {

std::optional<std::string> impl_problem(const OperationImpl& impl) {
  if (!impl.behavior) return "operation '" + impl.signature.name + "' has no behavior";
  ServiceDescriptor probe{"probe", "node://probe", {impl.signature}};
  auto violations = validate_descriptor(probe);
  if (!violations.empty()) return InvariantError(violations).what();
  if (auto why = impl.behavior->incompatibility(impl.signature)) {
    return "operation '" + impl.signature.name + "': " + *why;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Planning

namespace {

using Available = std::map<std::string, ParamType>;

bool satisfiable(const std::vector<ParamSpec>& inputs, const Available& available) {
  return std::all_of(inputs.begin(), inputs.end(), [&](const ParamSpec& p) {
    auto it = available.find(p.name);
    return it != available.end() && it->second == p.type;
  });
}

void publish(const std::vector<ParamSpec>& outputs, Available& available) {
  for (const auto& o : outputs) available[o.name] = o.type;
}

std::string node_of(const ServiceDescriptor& d) {
  auto id = endpoint_node_id(d.endpoint);
  return id ? *id : d.service_name;
}

}  // namespace

CompositionPlan plan_composition(const TaskSpec& task, const ServiceDescriptor& coordinator,
                                 std::span<const ServiceDescriptor> peers) {
  CompositionPlan plan;
  plan.task_id = task.task_id;
  plan.coordinator = node_of(coordinator);

  std::vector<const ServiceDescriptor*> ordered;
  for (const auto& p : peers) {
    if (node_of(p) != plan.coordinator) ordered.push_back(&p);
  }
  std::stable_sort(ordered.begin(), ordered.end(), [](const ServiceDescriptor* a, const ServiceDescriptor* b) {
    return node_of(*a) < node_of(*b);
  });

  Available available;
  publish(task.provided_inputs, available);

  for (const auto& op : task.required_ops) {
    if (coordinator.find(op)) continue;
    const ServiceDescriptor* host = nullptr;
    const OperationSignature* sig = nullptr;
    for (const auto* peer : ordered) {
      const OperationSignature* s = peer->find(op);
      if (s && satisfiable(s->inputs, available)) {
        host = peer;
        sig = s;
        break;
      }
    }
    if (!host) throw PlanError(op);
    plan.remote_steps.push_back({node_of(*host), *sig});
    publish(sig->outputs, available);
  }
  for (const auto& op : task.required_ops) {
    const OperationSignature* sig = coordinator.find(op);
    if (!sig) continue;
    if (!satisfiable(sig->inputs, available)) throw PlanError(op);
    plan.local_steps.push_back({plan.coordinator, *sig});
    publish(sig->outputs, available);
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Trace

void NodeTrace::append(Tick tick, const std::string& node, std::string_view kind, const std::string& op,
                       const std::string& detail) {
  Json j;
  j["tick"] = tick;
  j["node"] = node;
  j["kind"] = std::string(kind);
  j["op"] = op;
  j["detail"] = detail;
  std::lock_guard lock(mutex_);
  entries_.push_back(std::move(j));
}

std::vector<Json> NodeTrace::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::string NodeTrace::jsonl() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& e : entries_) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Node

struct Node::Registry {
  std::vector<OperationImpl> operations;
  ServiceDescriptor descriptor;
  std::uint64_t version = 0;

  const OperationImpl* find(std::string_view op) const {
    for (const auto& impl : operations) {
      if (impl.signature.name == op) return &impl;
    }
    return nullptr;
  }
};

namespace {

ServiceDescriptor describe(const std::string& id, const std::vector<OperationImpl>& ops) {
  ServiceDescriptor d{id, endpoint_for(id), {}};
  for (const auto& impl : ops) d.operations.push_back(impl.signature);
  return d;
}

Envelope fault_envelope(const Envelope& request, const FaultInfo& f) {
  return make_fault(request, f.code, f.message, f.detail);
}

}  // namespace

Node::Node(std::string id, std::vector<OperationImpl> operations, std::shared_ptr<NodeTrace> trace)
    : id_(std::move(id)), trace_(trace ? std::move(trace) : std::make_shared<NodeTrace>()) {
  if (!is_node_id(id_)) throw ValidationError("'" + id_ + "' is not a valid node id");
  std::set<std::string> names;
  for (const auto& impl : operations) {
    if (!names.insert(impl.signature.name).second) {
      throw ValidationError("node '" + id_ + "' defines '" + impl.signature.name + "' twice");
    }
    if (auto why = impl_problem(impl)) throw ValidationError(*why);
  }
  auto reg = std::make_shared<Registry>();
  reg->descriptor = describe(id_, operations);
  reg->operations = std::move(operations);
  registry_ = std::move(reg);
}

void Node::attach(Network& net) {
  set_clock([&net] { return net.now(); });
  net.register_node(id_, [this, &net](const Envelope& req) { return handle(req, &net); });
}

void Node::set_clock(Clock clock) { clock_ = std::move(clock); }

Tick Node::now() const { return clock_ ? clock_() : ++own_clock_; }

Node::Snapshot Node::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return registry_;
}

ServiceDescriptor Node::descriptor() const { return snapshot()->descriptor; }

std::uint64_t Node::registry_version() const { return snapshot()->version; }

std::string Node::handle_get_descriptor() const { return serialize_descriptor(descriptor()); }

InvokeResult Node::invoke_on(const Registry& reg, const std::string& op, const ValueMap& args) const {
  auto fail = [&](std::string_view code, std::string message, Json detail = Json::object()) {
    trace_->append(now(), id_, "fault", op, std::string(code) + ": " + message);
    InvokeResult r;
    r.fault = FaultInfo{std::string(code), std::move(message), std::move(detail)};
    return r;
  };

  const OperationImpl* impl = reg.find(op);
  if (!impl) return fail(fault::kUnknownOperation, "node '" + id_ + "' has no operation '" + op + "'");

  ValueMap call_args;
  for (const auto& in : impl->signature.inputs) {
    auto it = args.find(in.name);
    std::string actual = it == args.end() ? "missing" : std::string(to_string(it->second.type()));
    if (it == args.end() || it->second.type() != in.type) {
      Json detail;
      detail["arg"] = in.name;
      detail["expected"] = std::string(to_string(in.type));
      detail["actual"] = actual;
      return fail(fault::kTypeMismatch,
                  "argument '" + in.name + "' expected " + std::string(to_string(in.type)) + ", got " + actual,
                  std::move(detail));
    }
    call_args.emplace(in.name, it->second);
  }

  ValueMap out;
  try {
    out = impl->behavior->execute(impl->signature, call_args);
  } catch (const std::exception& e) {
    return fail(fault::kInternal, std::string("behavior failed: ") + e.what());
  }
  ValueMap result;
  for (const auto& o : impl->signature.outputs) {
    auto it = out.find(o.name);
    if (it == out.end() || it->second.type() != o.type) {
      return fail(fault::kInternal, "behavior did not produce output '" + o.name + "'");
    }
    result.emplace(o.name, it->second);
  }
  trace_->append(now(), id_, "invoke", op, "ok");
  return InvokeResult{std::move(result), std::nullopt};
}

InvokeResult Node::invoke(const std::string& op, const ValueMap& args) const {
  return invoke_on(*snapshot(), op, args);
}

InvokeResult Node::accept(const SubInvocation& visit) const {
  trace_->append(now(), id_, "accept", visit.op, "target=" + visit.target);
  if (visit.target != id_) {
    trace_->append(now(), id_, "fault", visit.op, "Internal: visit addressed to '" + visit.target + "'");
    InvokeResult r;
    r.fault = FaultInfo{std::string(fault::kInternal),
                        "visit for '" + visit.target + "' delivered to '" + id_ + "'", Json::object()};
    return r;
  }
  return invoke(visit.op, visit.args);
}

namespace {

Json results_body(const std::string& op, const ValueMap& values) {
  Json body;
  body["op"] = op;
  body["results"] = to_json(values);
  return body;
}

struct ParsedInvoke {
  std::string op;
  ValueMap args;
  std::string visitor;
};

ParsedInvoke parse_invoke(const Envelope& request) {
  const Json& b = request.body;
  if (!b.is_object() || !b.contains("op") || !b["op"].is_string()) {
    throw std::invalid_argument("invoke body needs a string 'op'");
  }
  ParsedInvoke p;
  p.op = b["op"].get<std::string>();
  p.args = b.contains("args") ? value_map_from_json(b["args"]) : ValueMap{};
  if (b.contains("visitor") && b["visitor"].is_string()) p.visitor = b["visitor"].get<std::string>();
  return p;
}

}  // namespace

Envelope Node::handle_invoke(const Envelope& request) const {
  ParsedInvoke p;
  try {
    p = parse_invoke(request);
  } catch (const std::exception& e) {
    return make_fault(request, fault::kInternal, std::string("malformed invoke: ") + e.what());
  }
  InvokeResult r = invoke(p.op, p.args);
  if (!r.ok()) return fault_envelope(request, *r.fault);
  return make_response(request, results_body(p.op, r.values));
}

CompositionPlan Node::plan(const TaskSpec& task, std::span<const ServiceDescriptor> peers) const {
  return plan_composition(task, descriptor(), peers);
}

ValueMap Node::execute_on(const Registry& reg, const CompositionPlan& plan, const ValueMap& args,
                          Network* net) const {
  ValueMap available = args;
  ValueMap result;

  auto gather_args = [&](const PlanStep& step) {
    ValueMap step_args;
    for (const auto& in : step.signature.inputs) {
      auto it = available.find(in.name);
      if (it == available.end() || it->second.type() != in.type) {
        throw CompositionFault(step.op(), std::string(fault::kTypeMismatch),
                               "no " + std::string(to_string(in.type)) + " value for '" + in.name + "'");
      }
      step_args.emplace(in.name, it->second);
    }
    return step_args;
  };
  auto merge = [&](const PlanStep& step, const ValueMap& values) {
    for (const auto& out : step.signature.outputs) {
      auto it = values.find(out.name);
      if (it == values.end() || it->second.type() != out.type) {
        throw CompositionFault(step.op(), std::string(fault::kInternal),
                               "reply lacks output '" + out.name + "'");
      }
      result[step.op() + "." + out.name] = it->second;
      available[out.name] = it->second;
    }
  };

  for (const auto& step : plan.remote_steps) {
    ValueMap step_args = gather_args(step);
    if (!net) {
      throw CompositionFault(step.op(), std::string(fault::kPeerUnreachable), "node is not on a network");
    }
    Envelope req;
    req.kind = EnvelopeKind::InvokeRequest;
    req.sender = id_;
    req.target = step.target;
    req.body["op"] = step.op();
    req.body["args"] = to_json(step_args);
    req.body["visitor"] = id_;
    Envelope reply = net->send(std::move(req));
    if (reply.is_fault()) {
      std::string msg = reply.body.value("message", std::string());
      throw CompositionFault(step.op(), reply.fault_code(), msg);
    }
    ValueMap values;
    try {
      values = value_map_from_json(reply.body.at("results"));
    } catch (const std::exception& e) {
      throw CompositionFault(step.op(), std::string(fault::kInternal), e.what());
    }
    merge(step, values);
  }
  for (const auto& step : plan.local_steps) {
    InvokeResult r = invoke_on(reg, step.op(), gather_args(step));
    if (!r.ok()) throw CompositionFault(step.op(), r.fault->code, r.fault->message);
    merge(step, r.values);
  }
  return result;
}

ValueMap Node::execute_plan(const CompositionPlan& plan, const ValueMap& args, Network* net) const {
  return execute_on(*snapshot(), plan, args, net);
}

Envelope Node::handle_task(const Envelope& request, Network* net) const {
  const Snapshot snap = snapshot();

  TaskSpec task;
  ValueMap args;
  try {
    task = TaskSpec::from_json(request.body.at("task"));
    args = request.body.contains("args") ? value_map_from_json(request.body["args"]) : ValueMap{};
  } catch (const std::exception& e) {
    return make_fault(request, fault::kInternal, std::string("malformed task: ") + e.what());
  }
  if (auto v = task.violations(); !v.empty()) {
    return make_fault(request, fault::kInternal, "invalid task: " + v.front());
  }

  std::vector<ServiceDescriptor> peers;
  const bool all_local = std::all_of(task.required_ops.begin(), task.required_ops.end(),
                                     [&](const std::string& op) { return snap->find(op) != nullptr; });
  if (!all_local && net) {
    for (const auto& r : net->broadcast_get_descriptors(id_, {id_})) {
      if (!r.wsdl) continue;
      try {
        ServiceDescriptor d = parse_descriptor(*r.wsdl);
        if (endpoint_node_id(d.endpoint) == r.node) peers.push_back(std::move(d));
      } catch (const DescriptorError&) {
        // unusable descriptor: the peer is treated as absent
      }
    }
  }

  CompositionPlan plan;
  try {
    plan = plan_composition(task, snap->descriptor, peers);
  } catch (const PlanError& e) {
    trace_->append(now(), id_, "fault", e.op(), std::string(fault::kPlanError) + ": " + e.what());
    Json detail;
    detail["op"] = e.op();
    return make_fault(request, fault::kPlanError, e.what(), detail);
  }

  ValueMap result;
  try {
    result = execute_on(*snap, plan, args, net);
  } catch (const CompositionFault& e) {
    trace_->append(now(), id_, "fault", e.op(), std::string(fault::kCompositionFault) + ": " + e.what());
    Json detail;
    detail["op"] = e.op();
    detail["cause"] = e.cause();
    return make_fault(request, fault::kCompositionFault, e.what(), detail);
  }

  Json body;
  body["task_id"] = task.task_id;
  body["coordinator"] = id_;
  body["remote_steps"] = plan.remote_steps.size();
  body["results"] = to_json(result);
  return make_response(request, std::move(body));
}

Envelope Node::handle(const Envelope& request, Network* net) const {
  switch (request.kind) {
    case EnvelopeKind::GetDescriptor: {
      Json body;
      body["wsdl"] = handle_get_descriptor();
      return make_response(request, std::move(body));
    }
    case EnvelopeKind::InvokeRequest:
      break;
    default:
      return make_fault(request, fault::kInternal, "unexpected envelope kind");
  }
  if (request.body.contains("task")) return handle_task(request, net);

  ParsedInvoke p;
  try {
    p = parse_invoke(request);
  } catch (const std::exception& e) {
    return make_fault(request, fault::kInternal, std::string("malformed invoke: ") + e.what());
  }
  InvokeResult r = p.visitor.empty() ? invoke(p.op, p.args) : accept(SubInvocation{request.target, p.op, p.args});
  if (!r.ok()) return fault_envelope(request, *r.fault);
  return make_response(request, results_body(p.op, r.values));
}

ServiceDescriptor Node::inject_feature(const FeatureModule& fm) {
  std::lock_guard writer(inject_mutex_);
  const Snapshot current = snapshot();
  auto reject = [&](const std::string& why) {
    trace_->append(now(), id_, "fault", fm.module_name, "inject rejected: " + why);
  };

  std::set<std::string> names;
  for (const auto& impl : current->operations) names.insert(impl.signature.name);
  for (const auto& impl : fm.adds) {
    if (!names.insert(impl.signature.name).second) {
      reject("collision on '" + impl.signature.name + "'");
      throw CollisionError(impl.signature.name);
    }
  }
  for (const auto& impl : fm.adds) {
    if (auto why = impl_problem(impl)) {
      reject(*why);
      throw ValidationError(*why);
    }
  }

  auto next = std::make_shared<Registry>(*current);
  for (const auto& impl : fm.adds) next->operations.push_back(impl);
  next->descriptor = describe(id_, next->operations);
  next->version = current->version + 1;
  ServiceDescriptor result = next->descriptor;
  {
    std::lock_guard lock(snapshot_mutex_);
    registry_ = std::move(next);
  }

  std::string added;
  for (const auto& impl : fm.adds) {
    if (!added.empty()) added += ',';
    added += impl.signature.name;
  }
  trace_->append(now(), id_, "inject", fm.module_name, "added [" + added + "]");
  return result;
}

}  // namespace soacomp
