#include <fstream>
#include <sstream>

#include "doctest.h"
#include "soacomp/runner.hpp"
#include "soacomp/scenario.hpp"
#include "support.hpp"

using namespace soacomp;
using namespace testkit;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path out_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "soacomp_runner_tests" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

Scenario bookstore() { return load_scenario(scenarios() / "bookstore.scenario"); }

ConfigError config_error(const std::string& text) {
  try {
    parse_scenario(text, fixtures());
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected ConfigError");
  return ConfigError("", "");
}

const TaskRecord& record(const RunResult& r, const std::string& id) {
  for (const auto& t : r.tasks) {
    if (t.task_id == id) return t;
  }
  throw std::runtime_error("no task " + id);
}

/// 100 tasks over the bookstore topology: searches, composites and misses.
std::string soak_scenario(std::size_t n) {
  Json root = Json::parse(slurp(scenarios() / "bookstore.scenario"));
  Json tasks = Json::array();
  const std::vector<std::vector<std::string>> shapes{
      {"EngBooksSearch"},
      {"MedicalBooksSearch"},
      {"EngBooksSearch", "MedicalBooksSearch"},
      {"EngBooksSearch", "MedicalBooksSearch", "getTheDeliveryAndPriceDetails"},
      {"ChemBooksSearch"}};
  for (std::size_t i = 0; i < n; ++i) {
    Json t;
    t["id"] = "t" + std::to_string(i);
    t["at"] = i % 7;
    t["required_ops"] = shapes[i % shapes.size()];
    t["inputs"] = Json::parse(R"({"title":{"type":"text","value":"Compilers"},"date":{"type":"integer","value":0},"price":{"type":"real","value":0.0}})");
    tasks.push_back(t);
  }
  root["tasks"] = tasks;
  return root.dump(2);
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("bookstore scenario loads") {
  Scenario s = bookstore();
  CHECK(s.topology.size() == 3);
  CHECK(s.tasks.size() == 1);
  CHECK(s.net.seed == 7);
  auto ds = descriptors_at(s, 0);
  CHECK(ds[1].operations[0].name == "EngBooksSearch");
  const auto& task = s.tasks[0].spec;
  CHECK(task.provided_inputs.size() == 3);
  CHECK(task.provided_inputs[0] == p("title", ParamType::Text));
}

TEST_CASE("validation errors carry context") {
  CHECK(config_error(slurp(fixtures() / "dup_nodes.scenario")).field() == "topology[1].id");
  CHECK(config_error(R"({"topology":[],"tasks":[{"id":"a","required_ops":["x"]},{"id":"a","required_ops":["y"]}]})").field() ==
        "tasks[1].id");
  CHECK(config_error(R"({"topology":[],"tasks":[],"features":[{"node":"ghost","module":"m","adds":[]}]})").field() ==
        "features[0].node");
  CHECK(config_error(R"({"topology":[],"tasks":[],"extra":1})").field() == "extra");
  CHECK(config_error(R"({"topology":[]})").field() == "tasks");
  CHECK(config_error(R"({"topology":[{"id":"Bad"}],"tasks":[]})").field() == "topology[0].id");
  CHECK(config_error(R"({"topology":[],"tasks":[{"id":"a","required_ops":[]}]})").field() == "tasks[0]");
  CHECK(config_error(R"({"net":{"unreachable":["ghost"]},"topology":[],"tasks":[]})").field() == "net.unreachable");
  CHECK(config_error(R"({"topology":[{"id":"a","operations":[{"name":"x","outputs":[{"name":"o","type":"int"}],"behavior":{"key":"affine","rules":[]}}]}],"tasks":[]})")
            .field() == "topology[0].operations[0].outputs[0].type");
  CHECK(config_error(R"({"topology":[{"id":"a","operations":[{"name":"x","outputs":[{"name":"o","type":"text"}],"behavior":{"key":"nope"}}]}],"tasks":[]})")
            .field() == "topology[0].operations[0].behavior");
}

TEST_CASE("json syntax errors carry the line") {
  ConfigError e = config_error("{\n  \"topology\": [\n  ,\n]}");
  CHECK(e.line() == 3);
}

TEST_CASE("missing scenario file") { CHECK_THROWS_AS(load_scenario("/nonexistent.scenario"), ConfigError); }

TEST_CASE("descriptors at a tick apply earlier injections only") {
  Scenario s = load_scenario(fixtures() / "injection.scenario");
  CHECK(descriptors_at(s, 19)[0].operations.size() == 1);
  CHECK(descriptors_at(s, 20)[0].operations.size() == 2);
  CHECK(descriptors_at(s, 99)[0].operations.size() == 2);  // colliding one skipped
}

}

TEST_SUITE("runner") {

TEST_CASE("bookstore end to end") {
  auto dir = out_dir("bookstore");
  RunOptions opts;
  opts.out_dir = dir;
  RunResult r = run_scenario(bookstore(), opts);
  CHECK(r.exit_code == exit_code::kOk);
  REQUIRE(r.tasks.size() == 1);
  const TaskRecord& t = r.tasks[0];
  CHECK(t.kind == "Composite");
  CHECK(t.decision->coordinator == "server1");
  CHECK(t.composition_envelopes == 2);
  CHECK(t.results.size() == 8);
  CHECK(r.metrics["totals"]["composite"] == 1);

  for (const char* f : {"events.jsonl", "trace.jsonl", "metrics.json", "nodes.jsonl"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  CHECK(slurp(dir / "trace.jsonl") == r.trace_jsonl);
  CHECK(slurp(dir / "events.jsonl") == r.events_jsonl);
  CHECK(load_events(dir / "events.jsonl").size() == 1);
}

TEST_CASE("composition envelopes match the trace oracle") {
  RunResult r = run_scenario(bookstore(), {});
  std::size_t node_invokes = 0;
  std::set<std::string> nodes{"server1", "server2", "server3"};
  for (const auto& e : r.trace) {
    if (e.envelope.kind == EnvelopeKind::InvokeRequest && nodes.contains(e.envelope.sender)) ++node_invokes;
  }
  CHECK(node_invokes == 2);
  CHECK(r.tasks[0].composition_envelopes == node_invokes);
}

TEST_CASE("per-task envelopes sum to the trace minus descriptor traffic") {
  for (const char* f : {"injection.scenario", "unreachable_peer.scenario", "nomatch.scenario"}) {
    RunResult r = run_scenario(load_scenario(fixtures() / f), {});
    std::size_t sum = 0;
    for (const auto& t : r.tasks) sum += t.envelopes;
    std::size_t descriptor = r.metrics["totals"]["descriptor_envelopes"].get<std::size_t>();
    CHECK(sum + descriptor == r.trace.size());
  }
  RunResult soak = run_scenario(parse_scenario(soak_scenario(30), scenarios()), {.clients = 5});
  std::size_t sum = 0;
  for (const auto& t : soak.tasks) sum += t.envelopes;
  CHECK(sum + soak.metrics["totals"]["descriptor_envelopes"].get<std::size_t>() == soak.trace.size());
}

TEST_CASE("exit codes") {
  CHECK(run_scenario(load_scenario(fixtures() / "nomatch.scenario"), {}).exit_code == exit_code::kNoMatch);
  CHECK(run_scenario(load_scenario(fixtures() / "unknown_op.scenario"), {}).exit_code == exit_code::kFault);
  CHECK(run_scenario(load_scenario(fixtures() / "early_injection.scenario"), {}).exit_code == exit_code::kOk);
  // a colliding injection alone is a failure
  Scenario s = load_scenario(fixtures() / "injection.scenario");
  s.tasks.erase(s.tasks.begin());
  RunResult r = run_scenario(s, {});
  CHECK(r.injections_applied == 1);
  CHECK(r.injections_failed == 1);
  CHECK(r.exit_code == exit_code::kFault);
}

TEST_CASE("fault paths") {
  RunResult unknown = run_scenario(load_scenario(fixtures() / "unknown_op.scenario"), {});
  CHECK(unknown.tasks[0].fault_code == fault::kUnknownOperation);
  RunResult mismatch = run_scenario(load_scenario(fixtures() / "type_mismatch.scenario"), {});
  CHECK(mismatch.tasks[0].fault_code == fault::kTypeMismatch);
  RunResult peer = run_scenario(load_scenario(fixtures() / "unreachable_peer.scenario"), {});
  CHECK(peer.tasks[0].fault_code == fault::kCompositionFault);
  CHECK(peer.tasks[0].fault_cause == fault::kPeerUnreachable);
}

TEST_CASE("fail-node option") {
  RunOptions opts;
  opts.fail_nodes = {"server3"};
  RunResult r = run_scenario(bookstore(), opts);
  CHECK(r.exit_code == exit_code::kNoMatch);
  auto events = parse_events(r.events_jsonl);
  CHECK(events[0].skipped == std::vector<std::string>{"server3"});

  opts.fail_nodes = {"ghost"};
  CHECK_THROWS_AS(run_scenario(bookstore(), opts), ConfigError);
}

TEST_CASE("all nodes down") {
  RunOptions opts;
  opts.fail_nodes = {"server1", "server2", "server3"};
  RunResult r = run_scenario(bookstore(), opts);
  CHECK(r.tasks[0].kind == "NoProviders");
  CHECK(r.exit_code == exit_code::kFault);
}

TEST_CASE("latency option scales ticks") {
  RunOptions slow;
  slow.latency = 3;
  RunResult a = run_scenario(bookstore(), {});
  RunResult b = run_scenario(bookstore(), slow);
  CHECK(b.tasks[0].completed - b.tasks[0].issued == 3 * (a.tasks[0].completed - a.tasks[0].issued));
  slow.latency = -1;
  CHECK_THROWS_AS(run_scenario(bookstore(), slow), ConfigError);
}

TEST_CASE("tasks issue at their ticks") {
  Scenario s = load_scenario(fixtures() / "injection.scenario");
  RunResult r = run_scenario(s, {});
  CHECK(record(r, "before").issued == 0);
  CHECK(record(r, "after").issued == 40);
  CHECK(record(r, "before").kind == "NoMatch");
  CHECK(record(r, "after").kind == "Direct");
}

TEST_CASE("double run is byte identical") {
  Scenario s = parse_scenario(soak_scenario(40), scenarios());
  s.net.jitter_ticks = 2;
  RunOptions opts;
  opts.seed = 99;
  opts.clients = 8;
  RunResult a = run_scenario(s, opts);
  RunResult b = run_scenario(s, opts);
  CHECK(a.events_jsonl == b.events_jsonl);
  CHECK(a.trace_jsonl == b.trace_jsonl);
  CHECK(a.node_trace_jsonl == b.node_trace_jsonl);
}

TEST_CASE("100 concurrent clients") {
  Scenario s = parse_scenario(soak_scenario(100), scenarios());
  auto dir = out_dir("soak");
  RunOptions opts;
  opts.clients = 100;
  opts.out_dir = dir;
  RunResult r = run_scenario(s, opts);
  auto events = load_events(dir / "events.jsonl");
  REQUIRE(events.size() == 100);
  std::set<std::string> clients;
  for (const auto& t : r.tasks) clients.insert(t.client);
  CHECK(clients.size() == 100);
  for (std::size_t i = 0; i < events.size(); ++i) {
    CHECK(events[i].event_id == i + 1);
    const auto& e = events[i];
    OracleDecision o = oracle_decide(e.task, descriptors_at(s, e.logical_time));
    CHECK(e.result->kind == o.kind);
    CHECK(e.result->chosen() == o.who);
  }
}

TEST_CASE("replay of a fresh log is clean") {
  Scenario s = parse_scenario(soak_scenario(20), scenarios());
  RunResult r = run_scenario(s, {.clients = 3});
  auto events = parse_events(r.events_jsonl);
  ReplayReport rep = replay(events, s);
  CHECK(rep.events == 20);
  CHECK(rep.divergences.empty());
  REQUIRE(rep.replayed.size() == 20);
  CHECK(rep.replayed[0].cause == Cause::Replay);

  Scenario inj = load_scenario(fixtures() / "injection.scenario");
  RunResult ri = run_scenario(inj, {});
  CHECK(replay(parse_events(ri.events_jsonl), inj).divergences.empty());
}

TEST_CASE("replay catches a tampered decision") {
  Scenario s = bookstore();
  RunResult r = run_scenario(s, {});
  Json line = Json::parse(r.events_jsonl);
  REQUIRE(line["decision"]["kind"] == "Composite");
  line["decision"]["kind"] = "Direct";
  line["decision"]["provider"] = "server1";
  line["decision"]["coordinator"] = nullptr;
  auto events = parse_events(line.dump() + "\n");
  ReplayReport rep = replay(events, s);
  REQUIRE(rep.divergences.size() == 1);
  CHECK(rep.divergences[0].task_id == "order1");
  CHECK(rep.divergences[0].replayed["kind"] == "Composite");
}

TEST_CASE("pre-injection log against a post-injection topology") {
  Scenario without = load_scenario(fixtures() / "no_injection.scenario");
  Scenario with = load_scenario(fixtures() / "early_injection.scenario");
  RunResult r = run_scenario(without, {});
  auto events = parse_events(r.events_jsonl);
  // before/after oracle: every task the injection turns from NoMatch into a match diverges
  std::set<std::string> affected;
  for (const auto& e : events) {
    OracleDecision pre = oracle_decide(e.task, descriptors_at(without, e.logical_time));
    OracleDecision post = oracle_decide(e.task, descriptors_at(with, e.logical_time));
    if (pre.kind != post.kind || pre.who != post.who) affected.insert(e.task.task_id);
  }
  ReplayReport rep = replay(events, with);
  std::set<std::string> diverged;
  for (const auto& d : rep.divergences) diverged.insert(d.task_id);
  CHECK(diverged == affected);
  CHECK(diverged.size() == 2);
}

TEST_CASE("replay against a scenario missing a considered node") {
  RunResult r = run_scenario(bookstore(), {});
  Scenario small = bookstore();
  small.topology.pop_back();
  ReplayReport rep = replay(parse_events(r.events_jsonl), small);
  REQUIRE(rep.divergences.size() == 1);
  CHECK(rep.divergences[0].reason.find("server3") != std::string::npos);
}

}
