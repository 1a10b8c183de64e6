#include "soacomp/matchmaker.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace soacomp {

namespace {

Json params_to_json(const std::vector<ParamSpec>& ps) {
  Json arr = Json::array();
  for (const auto& p : ps) {
    Json j;
    j["name"] = p.name;
    j["type"] = std::string(to_string(p.type));
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<ParamSpec> params_from_json(const Json& j, const char* field) {
  if (!j.is_array()) throw std::invalid_argument(std::string(field) + " must be an array");
  std::vector<ParamSpec> out;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("name") || !item.contains("type") ||
        !item["name"].is_string() || !item["type"].is_string()) {
      throw std::invalid_argument(std::string(field) + " entries need string name and type");
    }
    auto type = parse_param_type(item["type"].get<std::string>());
    if (!type) throw std::invalid_argument("unknown type '" + item["type"].get<std::string>() + "'");
    out.push_back({item["name"].get<std::string>(), *type});
  }
  return out;
}

std::vector<std::string> strings_from_json(const Json& j, const char* field) {
  if (!j.is_array()) throw std::invalid_argument(std::string(field) + " must be an array");
  std::vector<std::string> out;
  for (const auto& item : j) {
    if (!item.is_string()) throw std::invalid_argument(std::string(field) + " must hold strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw std::invalid_argument(std::string("missing field '") + key + "'");
  }
  return j[key];
}

std::string optional_string(const Json& j) { return j.is_null() ? std::string() : j.get<std::string>(); }

}  // namespace

// ---------------------------------------------------------------------------
// TaskSpec

std::vector<std::string> TaskSpec::violations() const {
  std::vector<std::string> out;
  if (task_id.empty()) out.push_back("task_id is empty");
  if (required_ops.empty()) out.push_back("required_ops is empty");
  std::set<std::string_view> ops;
  for (const auto& op : required_ops) {
    if (!ops.insert(op).second) out.push_back("required op '" + op + "' listed twice");
  }
  std::set<std::string_view> inputs;
  for (const auto& p : provided_inputs) {
    if (!inputs.insert(p.name).second) out.push_back("provided input '" + p.name + "' listed twice");
  }
  return out;
}

Json TaskSpec::to_json() const {
  Json j;
  j["task_id"] = task_id;
  j["required_ops"] = required_ops;
  j["provided_inputs"] = params_to_json(provided_inputs);
  j["expected_outputs"] = params_to_json(expected_outputs);
  return j;
}

TaskSpec TaskSpec::from_json(const Json& j) {
  TaskSpec t;
  const Json& id = field(j, "task_id");
  if (!id.is_string()) throw std::invalid_argument("task_id must be a string");
  t.task_id = id.get<std::string>();
  t.required_ops = strings_from_json(field(j, "required_ops"), "required_ops");
  t.provided_inputs = params_from_json(field(j, "provided_inputs"), "provided_inputs");
  if (j.contains("expected_outputs")) {
    t.expected_outputs = params_from_json(j["expected_outputs"], "expected_outputs");
  }
  return t;
}

// ---------------------------------------------------------------------------
// Scores and decisions

std::vector<std::string> MatchScore::satisfied_ops() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < covered_ops.size(); ++i) {
    if (input_ok[i]) out.push_back(covered_ops[i]);
  }
  return out;
}

Json MatchScore::to_json() const {
  Json j;
  j["descriptor"] = descriptor_name;
  j["covered_ops"] = covered_ops;
  Json ok = Json::array();
  for (bool b : input_ok) ok.push_back(b);
  j["input_ok"] = std::move(ok);
  j["coverage"] = {{"num", satisfied}, {"den", required}};
  return j;
}

MatchScore MatchScore::from_json(const Json& j) {
  MatchScore s;
  s.descriptor_name = field(j, "descriptor").get<std::string>();
  s.covered_ops = strings_from_json(field(j, "covered_ops"), "covered_ops");
  const Json& ok = field(j, "input_ok");
  if (!ok.is_array() || ok.size() != s.covered_ops.size()) {
    throw std::invalid_argument("input_ok must parallel covered_ops");
  }
  for (const auto& b : ok) s.input_ok.push_back(b.get<bool>());
  const Json& cov = field(j, "coverage");
  s.satisfied = field(cov, "num").get<std::size_t>();
  s.required = field(cov, "den").get<std::size_t>();
  return s;
}

std::string_view to_string(DecisionKind k) {
  switch (k) {
    case DecisionKind::Direct: return "Direct";
    case DecisionKind::Composite: return "Composite";
    case DecisionKind::NoMatch: return "NoMatch";
  }
  return "?";
}

const std::string& Decision::chosen() const {
  static const std::string kNone;
  switch (kind) {
    case DecisionKind::Direct: return provider;
    case DecisionKind::Composite: return coordinator;
    default: return kNone;
  }
}

Json Decision::to_json() const {
  Json j;
  j["kind"] = std::string(to_string(kind));
  j["provider"] = provider.empty() ? Json(nullptr) : Json(provider);
  j["coordinator"] = coordinator.empty() ? Json(nullptr) : Json(coordinator);
  Json scores_json = Json::array();
  for (const auto& s : scores) scores_json.push_back(s.to_json());
  j["scores"] = std::move(scores_json);
  return j;
}

Decision Decision::from_json(const Json& j) {
  Decision d;
  const std::string kind = field(j, "kind").get<std::string>();
  if (kind == "Direct") d.kind = DecisionKind::Direct;
  else if (kind == "Composite") d.kind = DecisionKind::Composite;
  else if (kind == "NoMatch") d.kind = DecisionKind::NoMatch;
  else throw std::invalid_argument("unknown decision kind '" + kind + "'");
  d.provider = optional_string(field(j, "provider"));
  d.coordinator = optional_string(field(j, "coordinator"));
  for (const auto& s : field(j, "scores")) d.scores.push_back(MatchScore::from_json(s));
  return d;
}

MatchScore evaluate_rules(const TaskSpec& task, const ServiceDescriptor& d) {
  MatchScore score;
  score.descriptor_name = d.service_name;
  score.required = task.required_ops.size();
  for (const auto& op_name : task.required_ops) {
    const OperationSignature* op = d.find(op_name);
    if (!op) continue;
    bool ok = std::all_of(op->inputs.begin(), op->inputs.end(), [&](const ParamSpec& in) {
      return std::find(task.provided_inputs.begin(), task.provided_inputs.end(), in) !=
             task.provided_inputs.end();
    });
    score.covered_ops.push_back(op_name);
    score.input_ok.push_back(ok);
    if (ok) ++score.satisfied;
  }
  return score;
}

Decision decide(const TaskSpec& task, std::span<const ServiceDescriptor> descriptors) {
  Decision decision;
  for (const auto& d : descriptors) decision.scores.push_back(evaluate_rules(task, d));
  // Total order over score content keeps the result permutation invariant
  // even when two descriptors share a name.
  std::sort(decision.scores.begin(), decision.scores.end(), [](const MatchScore& a, const MatchScore& b) {
    return std::tie(a.descriptor_name, a.covered_ops, a.input_ok) <
           std::tie(b.descriptor_name, b.covered_ops, b.input_ok);
  });

  for (const auto& s : decision.scores) {
    if (s.complete()) {
      decision.kind = DecisionKind::Direct;
      decision.provider = s.descriptor_name;  // scores are name-sorted
      return decision;
    }
  }

  std::set<std::string> reachable;
  for (const auto& s : decision.scores) {
    for (auto& op : s.satisfied_ops()) reachable.insert(std::move(op));
  }
  const bool covered = std::all_of(task.required_ops.begin(), task.required_ops.end(),
                                   [&](const std::string& op) { return reachable.contains(op); });
  if (!covered || decision.scores.empty()) {
    decision.kind = DecisionKind::NoMatch;
    return decision;
  }

  const MatchScore* best = &decision.scores.front();
  for (const auto& s : decision.scores) {
    if (s.satisfied > best->satisfied) best = &s;
  }
  decision.kind = DecisionKind::Composite;
  decision.coordinator = best->descriptor_name;
  return decision;
}

// ---------------------------------------------------------------------------
// Events

std::string_view to_string(Cause c) {
  return c == Cause::ClientRequest ? "ClientRequest" : "Replay";
}

Json TriggerEvent::to_json() const {
  Json j;
  j["event_id"] = event_id;
  j["logical_time"] = logical_time;
  j["cause"] = std::string(to_string(cause));
  j["task"] = task.to_json();
  j["considered"] = considered;
  j["skipped"] = skipped;
  j["decision"] = result ? result->to_json() : Json(nullptr);
  return j;
}

TriggerEvent TriggerEvent::from_json(const Json& j) {
  TriggerEvent e;
  const Json& id = field(j, "event_id");
  if (!id.is_number_unsigned()) throw std::invalid_argument("event_id must be a positive integer");
  e.event_id = id.get<std::uint64_t>();
  e.logical_time = field(j, "logical_time").get<Tick>();
  const std::string cause = field(j, "cause").get<std::string>();
  if (cause == "ClientRequest") e.cause = Cause::ClientRequest;
  else if (cause == "Replay") e.cause = Cause::Replay;
  else throw std::invalid_argument("unknown cause '" + cause + "'");
  e.task = TaskSpec::from_json(field(j, "task"));
  e.considered = strings_from_json(field(j, "considered"), "considered");
  if (j.contains("skipped")) e.skipped = strings_from_json(j["skipped"], "skipped");
  const Json& decision = field(j, "decision");
  if (!decision.is_null()) e.result = Decision::from_json(decision);
  return e;
}

Trigger::Trigger(std::uint64_t first_event_id, Clock clock)
    : next_id_(first_event_id), clock_(std::move(clock)) {}

TriggerEvent Trigger::raise(const TaskSpec& task, std::span<const ServiceDescriptor> descriptors,
                            Cause cause) {
  TriggerEvent e;
  {
    std::lock_guard lock(mutex_);
    e.event_id = next_id_++;
    e.logical_time = clock_ ? clock_() : ++counter_;
  }
  e.cause = cause;
  e.task = task;
  for (const auto& d : descriptors) e.considered.push_back(d.service_name);
  return e;
}

// ---------------------------------------------------------------------------
// Repository

TriggerRepository::TriggerRepository() = default;

TriggerRepository::TriggerRepository(std::filesystem::path path, bool truncate) : path_(path) {
  std::error_code ec;
  if (!truncate && std::filesystem::exists(path, ec)) {
    auto existing = load_events(path);
    if (!existing.empty()) last_written_ = existing.back().event_id;
  }
  out_.open(path, truncate ? (std::ios::binary | std::ios::trunc) : (std::ios::binary | std::ios::app));
  if (!out_) throw IoError("cannot open event log '" + path.string() + "' for writing");
}

std::uint64_t TriggerRepository::next_event_id() const {
  std::lock_guard lock(mutex_);
  return last_written_ + 1;
}

void TriggerRepository::record(const TriggerEvent& e) {
  if (!e.result) throw std::invalid_argument("event " + std::to_string(e.event_id) + " has no decision");
  const std::string line = e.to_json().dump();

  std::unique_lock lock(mutex_);
  if (e.event_id <= last_written_) {
    throw std::invalid_argument("event_id " + std::to_string(e.event_id) + " is not above " +
                                std::to_string(last_written_));
  }
  // Predecessors raised through the same Trigger are usually microseconds
  // away; an id that was never recorded only delays, it cannot block.
  turn_.wait_until(lock, std::chrono::system_clock::now() + std::chrono::seconds(2), [&] { return e.event_id <= last_written_ + 1; });
  if (e.event_id <= last_written_) {
    throw std::invalid_argument("event_id " + std::to_string(e.event_id) + " arrived after a later event");
  }
  if (path_) {
    out_ << line << '\n';
    out_.flush();
    if (!out_) throw IoError("write to event log '" + path_->string() + "' failed");
  }
  lines_.push_back(line);
  last_written_ = e.event_id;
  turn_.notify_all();
}

std::vector<std::string> TriggerRepository::lines() const {
  std::lock_guard lock(mutex_);
  return lines_;
}

std::string TriggerRepository::jsonl() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

std::vector<TriggerEvent> parse_events(std::string_view jsonl) {
  std::vector<TriggerEvent> events;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) throw CorruptLog(line_no, "empty line");
    TriggerEvent e;
    try {
      e = TriggerEvent::from_json(Json::parse(line));
    } catch (const std::exception& ex) {  // json::exception derives from std::exception
      throw CorruptLog(line_no, ex.what());
    }
    if (!events.empty() && e.event_id <= events.back().event_id) {
      throw CorruptLog(line_no, "event_id " + std::to_string(e.event_id) + " does not increase");
    }
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<TriggerEvent> load_events(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read event log '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read error on event log '" + path.string() + "'");
  return parse_events(buf.str());
}

// ---------------------------------------------------------------------------
// ClientAPI

GatherResult gather_descriptors(const std::string& client_id, Network& net) {
  GatherResult out;
  for (auto& r : net.broadcast_get_descriptors(client_id)) {
    if (!r.wsdl) {
      out.skipped.push_back({r.node, r.skip_reason});
      continue;
    }
    try {
      ServiceDescriptor d = parse_descriptor(*r.wsdl);
      if (endpoint_node_id(d.endpoint) != r.node) {
        out.skipped.push_back({r.node, "endpoint " + d.endpoint + " does not name the node"});
        continue;
      }
      out.descriptors.push_back(std::move(d));
    } catch (const DescriptorError& e) {
      out.skipped.push_back({r.node, e.what()});
    }
  }
  if (out.descriptors.empty()) throw NoProviders("no node answered the descriptor broadcast");
  return out;
}

Json task_request_body(const TaskSpec& task, const ValueMap& args) {
  Json body;
  body["task"] = task.to_json();
  body["args"] = to_json(args);
  return body;
}

ClientApi::ClientApi(std::string client_id, Network& net, Trigger& trigger, TriggerRepository& repo)
    : client_id_(std::move(client_id)), net_(net), trigger_(trigger), repo_(repo) {}

ClientApi::Outcome ClientApi::request(const TaskSpec& task, const ValueMap& args) {
  GatherResult gathered = gather_descriptors(client_id_, net_);

  Outcome outcome;
  outcome.event = trigger_.raise(task, gathered.descriptors, Cause::ClientRequest);
  for (const auto& s : gathered.skipped) outcome.event.skipped.push_back(s.node);
  outcome.event.result = decide(task, gathered.descriptors);
  repo_.record(outcome.event);

  const Decision& decision = *outcome.event.result;
  if (decision.kind == DecisionKind::NoMatch) return outcome;

  std::string target;
  for (const auto& d : gathered.descriptors) {
    if (d.service_name == decision.chosen()) {
      target = *endpoint_node_id(d.endpoint);
      break;
    }
  }
  Envelope req;
  req.kind = EnvelopeKind::InvokeRequest;
  req.sender = client_id_;
  req.target = target;
  req.body = task_request_body(task, args);
  outcome.reply = net_.send(std::move(req));
  return outcome;
}

}  // namespace soacomp
