#include "soacomp/runner.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <set>

#include "soacomp/node.hpp"

namespace soacomp {

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  out.flush();
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

void run_task(const TaskDef& def, TaskRecord& rec, ClientApi& client, Network& net) {
  rec.issued = net.now();
  if (def.invoke) {
    rec.kind = "Invoke";
    Envelope req;
    req.kind = EnvelopeKind::InvokeRequest;
    req.sender = client.id();
    req.target = def.invoke->node;
    req.body["op"] = def.invoke->op;
    req.body["args"] = to_json(def.invoke->args);
    Envelope reply = net.send(std::move(req));
    if (reply.is_fault()) {
      rec.outcome = "fault";
      rec.fault_code = reply.fault_code();
    } else {
      rec.outcome = "ok";
      rec.results = value_map_from_json(reply.body.at("results"));
    }
    rec.completed = net.now();
    return;
  }

  try {
    ClientApi::Outcome out = client.request(def.spec, def.args);
    rec.decision = out.event.result;
    rec.kind = std::string(to_string(out.event.result->kind));
    if (!out.reply) {
      rec.outcome = "nomatch";
    } else if (out.reply->is_fault()) {
      rec.outcome = "fault";
      rec.fault_code = out.reply->fault_code();
      rec.fault_cause = out.reply->body.value("cause", std::string());
    } else {
      rec.outcome = "ok";
      rec.results = value_map_from_json(out.reply->body.at("results"));
    }
  } catch (const NoProviders&) {
    rec.kind = "NoProviders";
    rec.outcome = "fault";
    rec.fault_code = "NoProviders";
  }
  rec.completed = net.now();
}

Json fault_json(const std::string& s) { return s.empty() ? Json(nullptr) : Json(s); }

}  // namespace

RunResult run_scenario(const Scenario& scenario, const RunOptions& options) {
  NetConfig cfg = scenario.net;
  if (options.seed) cfg.seed = *options.seed;
  if (options.latency) {
    if (*options.latency < 0) throw ConfigError("latency must be >= 0", "--latency");
    cfg.latency_ticks = *options.latency;
  }
  std::set<std::string> ids;
  for (const auto& n : scenario.topology) ids.insert(n.id);
  for (const auto& f : options.fail_nodes) {
    if (!ids.contains(f)) throw ConfigError("unknown node '" + f + "'", "--fail-node");
    cfg.unreachable.insert(f);
  }
  if (options.clients == 0) throw ConfigError("need at least one client", "--clients");

  if (!options.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) throw IoError("cannot create '" + options.out_dir.string() + "': " + ec.message());
  }

  Network net(cfg);
  auto node_trace = std::make_shared<NodeTrace>();
  std::map<std::string, std::unique_ptr<Node>> nodes;
  for (const auto& def : scenario.topology) {
    auto node = std::make_unique<Node>(def.id, def.operations, node_trace);
    node->attach(net);
    nodes.emplace(def.id, std::move(node));
  }

  std::unique_ptr<TriggerRepository> repo =
      options.out_dir.empty() ? std::make_unique<TriggerRepository>()
                              : std::make_unique<TriggerRepository>(options.out_dir / "events.jsonl", true);
  Trigger trigger(repo->next_event_id(), [&net] { return net.now(); });

  RunResult result;
  std::size_t applied = 0;
  std::size_t failed = 0;
  for (const auto& f : scenario.features) {
    Node* target = nodes.at(f.node).get();
    net.spawn("inject:" + f.module.module_name, f.at, [target, &f, &applied, &failed] {
      try {
        target->inject_feature(f.module);
        ++applied;
      } catch (const NodeError&) {
        ++failed;
      }
    });
  }

  // Issue order: tick, then scenario order.
  std::vector<std::size_t> order(scenario.tasks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scenario.tasks[a].at < scenario.tasks[b].at; });

  result.tasks.resize(scenario.tasks.size());
  const std::size_t clients = std::min(options.clients, std::max<std::size_t>(order.size(), 1));
  std::vector<std::unique_ptr<ClientApi>> apis;
  for (std::size_t k = 0; k < clients; ++k) {
    std::vector<std::size_t> mine;
    for (std::size_t i = k; i < order.size(); i += clients) mine.push_back(order[i]);
    if (mine.empty()) continue;
    auto api = std::make_unique<ClientApi>("client" + std::to_string(k + 1), net, trigger, *repo);
    ClientApi* client = api.get();
    apis.push_back(std::move(api));
    net.spawn(client->id(), scenario.tasks[mine.front()].at, [&, client, mine] {
      for (std::size_t idx : mine) {
        const TaskDef& def = scenario.tasks[idx];
        net.sleep_until(def.at);
        net.set_tag(def.id);
        TaskRecord& rec = result.tasks[idx];
        rec.task_id = def.id;
        rec.client = client->id();
        run_task(def, rec, *client, net);
      }
    });
  }
  net.run();

  result.injections_applied = applied;
  result.injections_failed = failed;
  result.trace = net.trace();
  result.trace_jsonl = net.trace_jsonl();
  result.events_jsonl = repo->jsonl();
  result.node_trace_jsonl = node_trace->jsonl();

  // Attribute envelopes to tasks; descriptor fetches and their replies are
  // counted separately.
  std::set<std::uint64_t> fetches;
  for (const auto& e : result.trace) {
    if (e.envelope.kind == EnvelopeKind::GetDescriptor) fetches.insert(e.envelope.request_id);
  }
  std::map<std::string, TaskRecord*> by_id;
  for (auto& rec : result.tasks) by_id[rec.task_id] = &rec;
  std::size_t descriptor_envelopes = 0;
  for (const auto& e : result.trace) {
    if (fetches.contains(e.envelope.request_id)) {
      ++descriptor_envelopes;
      continue;
    }
    auto it = by_id.find(e.tag);
    if (it == by_id.end()) continue;
    ++it->second->envelopes;
    if (e.envelope.kind == EnvelopeKind::InvokeRequest && ids.contains(e.envelope.sender)) {
      ++it->second->composition_envelopes;
    }
  }

  std::size_t nomatch = 0, faults = 0, direct = 0, composite = 0, attributed = 0;
  Json tasks_json = Json::array();
  for (const auto& rec : result.tasks) {
    if (rec.outcome == "nomatch") ++nomatch;
    if (rec.outcome == "fault") ++faults;
    if (rec.kind == "Direct") ++direct;
    if (rec.kind == "Composite") ++composite;
    attributed += rec.envelopes;
    Json t;
    t["task_id"] = rec.task_id;
    t["client"] = rec.client;
    t["kind"] = rec.kind;
    t["outcome"] = rec.outcome;
    t["fault"] = fault_json(rec.fault_code);
    t["cause"] = fault_json(rec.fault_cause);
    t["envelopes"] = rec.envelopes;
    t["composition_envelopes"] = rec.composition_envelopes;
    t["issued_tick"] = rec.issued;
    t["completed_tick"] = rec.completed;
    t["latency_ticks"] = rec.completed - rec.issued;
    tasks_json.push_back(std::move(t));
  }
  Json totals;
  totals["tasks_run"] = result.tasks.size();
  totals["direct"] = direct;
  totals["composite"] = composite;
  totals["nomatch"] = nomatch;
  totals["faults"] = faults;
  totals["injections_applied"] = applied;
  totals["injections_failed"] = failed;
  totals["task_envelopes"] = attributed;
  totals["descriptor_envelopes"] = descriptor_envelopes;
  totals["trace_length"] = result.trace.size();
  result.metrics["tasks"] = std::move(tasks_json);
  result.metrics["totals"] = std::move(totals);

  if (nomatch > 0) {
    result.exit_code = exit_code::kNoMatch;
  } else if (faults > 0 || failed > 0) {
    result.exit_code = exit_code::kFault;
  }

  if (!options.out_dir.empty()) {
    write_file(options.out_dir / "trace.jsonl", result.trace_jsonl);
    write_file(options.out_dir / "nodes.jsonl", result.node_trace_jsonl);
    write_file(options.out_dir / "metrics.json", result.metrics.dump(2) + "\n");
  }
  return result;
}

Json ReplayReport::to_json() const {
  Json j;
  j["events"] = events;
  Json divs = Json::array();
  for (const auto& d : divergences) {
    Json dj;
    dj["event_id"] = d.event_id;
    dj["task_id"] = d.task_id;
    dj["reason"] = d.reason;
    dj["logged"] = d.logged;
    dj["replayed"] = d.replayed;
    divs.push_back(std::move(dj));
  }
  j["divergences"] = std::move(divs);
  return j;
}

ReplayReport replay(std::span<const TriggerEvent> events, const Scenario& scenario) {
  ReplayReport report;
  report.events = events.size();
  Trigger trigger;
  for (const auto& logged : events) {
    std::vector<ServiceDescriptor> all = descriptors_at(scenario, logged.logical_time);
    std::vector<ServiceDescriptor> considered;
    std::string missing;
    for (const auto& name : logged.considered) {
      auto it = std::find_if(all.begin(), all.end(),
                             [&](const ServiceDescriptor& d) { return d.service_name == name; });
      if (it == all.end()) {
        missing = name;
        break;
      }
      considered.push_back(*it);
    }
    Json logged_json = logged.result ? logged.result->to_json() : Json(nullptr);
    if (!missing.empty()) {
      report.divergences.push_back({logged.event_id, logged.task.task_id,
                                    "considered node '" + missing + "' is not in the scenario", logged_json,
                                    nullptr});
      continue;
    }

    TriggerEvent again = trigger.raise(logged.task, considered, Cause::Replay);
    again.logical_time = logged.logical_time;
    again.skipped = logged.skipped;
    again.result = decide(logged.task, considered);
    if (!logged.result || !(*logged.result == *again.result)) {
      std::string reason = "decision differs";
      if (logged.result) {
        reason += ": logged " + std::string(to_string(logged.result->kind)) + "(" + logged.result->chosen() +
                  "), replayed " + std::string(to_string(again.result->kind)) + "(" + again.result->chosen() + ")";
      }
      report.divergences.push_back(
          {logged.event_id, logged.task.task_id, std::move(reason), logged_json, again.result->to_json()});
    }
    report.replayed.push_back(std::move(again));
  }
  return report;
}

}  // namespace soacomp
