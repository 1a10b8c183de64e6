#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "support.hpp"

using namespace soacomp;
using namespace testkit;

namespace {

const ParamSpec kTitle{"title", ParamType::Text};

ServiceDescriptor eng() {
  return desc("server2", {sig("EngBooksSearch", {kTitle},
                              {p("value", ParamType::Flag), p("date", ParamType::Integer), p("price", ParamType::Real)})});
}
ServiceDescriptor med() {
  return desc("server3", {sig("MedicalBooksSearch", {kTitle},
                              {p("value", ParamType::Flag), p("date", ParamType::Integer), p("price", ParamType::Real)})});
}
ServiceDescriptor agg() {
  return desc("server1", {sig("getTheDeliveryAndPriceDetails", {p("date", ParamType::Integer), p("price", ParamType::Real)},
                              {p("delivery_date", ParamType::Integer), p("total_price", ParamType::Real)})});
}

TaskSpec bookstore_task() {
  return task("order1", {"EngBooksSearch", "MedicalBooksSearch", "getTheDeliveryAndPriceDetails"},
              {kTitle, p("date", ParamType::Integer), p("price", ParamType::Real)});
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "soacomp_tests";
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::filesystem::remove(path);
  return path;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

TriggerEvent decided(Trigger& trig, const TaskSpec& t, const std::vector<ServiceDescriptor>& ds) {
  TriggerEvent e = trig.raise(t, ds);
  e.result = decide(t, ds);
  return e;
}

}  // namespace

TEST_SUITE("matchmaker") {

TEST_CASE("evaluate_rules: one of two ops covered with inputs") {
  TaskSpec t = task("t", {"EngBooksSearch", "MedicalBooksSearch"}, {kTitle});
  MatchScore s = evaluate_rules(t, eng());
  CHECK(s.descriptor_name == "server2");
  CHECK(s.covered_ops == std::vector<std::string>{"EngBooksSearch"});
  CHECK(s.input_ok == std::vector<bool>{true});
  CHECK(s.satisfied == 1);
  CHECK(s.required == 2);
}

TEST_CASE("evaluate_rules: empty descriptor") {
  TaskSpec t = task("t", {"EngBooksSearch", "MedicalBooksSearch"}, {kTitle});
  MatchScore s = evaluate_rules(t, desc("empty", {}));
  CHECK(s.covered_ops.empty());
  CHECK(s.satisfied == 0);
  CHECK(s.required == 2);
}

TEST_CASE("evaluate_rules: covered with mistyped input") {
  TaskSpec t = task("t", {"EngBooksSearch", "MedicalBooksSearch"}, {kTitle});
  ServiceDescriptor d = desc("server2", {sig("EngBooksSearch", {p("title", ParamType::Integer)}, {p("v", ParamType::Flag)})});
  MatchScore s = evaluate_rules(t, d);
  CHECK(s.covered_ops == std::vector<std::string>{"EngBooksSearch"});
  CHECK(s.input_ok == std::vector<bool>{false});
  CHECK(s.satisfied == 0);
  CHECK_FALSE(s.complete());
}

TEST_CASE("evaluate_rules: names are case-sensitive") {
  TaskSpec t = task("t", {"engbookssearch"}, {kTitle});
  CHECK(evaluate_rules(t, eng()).covered_ops.empty());
}

TEST_CASE("decide: bookstore is composite on server1") {
  std::vector<ServiceDescriptor> ds{agg(), eng(), med()};
  Decision d = decide(bookstore_task(), ds);
  CHECK(d.kind == DecisionKind::Composite);
  CHECK(d.coordinator == "server1");
  CHECK(d.provider.empty());
  REQUIRE(d.scores.size() == 3);
  for (const auto& s : d.scores) {
    CHECK(s.satisfied == 1);
    CHECK(s.required == 3);
  }
}

TEST_CASE("decide: one descriptor covering everything is direct") {
  ServiceDescriptor all = desc("zeta", {sig("EngBooksSearch", {kTitle}, {p("v", ParamType::Flag)}),
                                        sig("MedicalBooksSearch", {kTitle}, {p("v", ParamType::Flag)})});
  TaskSpec t = task("t", {"EngBooksSearch", "MedicalBooksSearch"}, {kTitle});
  std::vector<ServiceDescriptor> ds{eng(), all, med()};
  Decision d = decide(t, ds);
  CHECK(d.kind == DecisionKind::Direct);
  CHECK(d.provider == "zeta");
  CHECK(d.chosen() == "zeta");
}

TEST_CASE("decide: smallest name among complete providers") {
  TaskSpec t = task("t", {"EngBooksSearch"}, {kTitle});
  ServiceDescriptor a = eng();
  a.service_name = "b";
  ServiceDescriptor b = eng();
  b.service_name = "a";
  std::vector<ServiceDescriptor> ds{a, b};
  CHECK(decide(t, ds).provider == "a");
}

TEST_CASE("decide: op nobody offers is NoMatch") {
  TaskSpec t = task("t", {"ChemBooksSearch"}, {kTitle});
  std::vector<ServiceDescriptor> ds{agg(), eng(), med()};
  Decision d = decide(t, ds);
  CHECK(d.kind == DecisionKind::NoMatch);
  CHECK(d.chosen().empty());
}

TEST_CASE("decide: covered but unsatisfiable is NoMatch") {
  TaskSpec t = task("t", {"EngBooksSearch"}, {p("title", ParamType::Integer)});
  std::vector<ServiceDescriptor> ds{eng()};
  CHECK(decide(t, ds).kind == DecisionKind::NoMatch);
}

TEST_CASE("decide matches the brute-force oracle") {
  Gen g(2024);
  for (int i = 0; i < 300; ++i) {
    MatchCase c = match_case(g);
    Decision d = decide(c.task, c.descriptors);
    OracleDecision o = oracle_decide(c.task, c.descriptors);
    CHECK(d.kind == o.kind);
    CHECK(d.chosen() == o.who);
    for (int k = 0; k < 50; ++k) {
      std::vector<ServiceDescriptor> perm = c.descriptors;
      g.shuffle(perm);
      CHECK(decide(c.task, perm) == d);
    }
  }
}

TEST_CASE("decision invariants hold") {
  Gen g(31337);
  for (int i = 0; i < 500; ++i) {
    MatchCase c = match_case(g);
    Decision d = decide(c.task, c.descriptors);
    if (d.kind == DecisionKind::Direct) {
      auto it = std::find_if(c.descriptors.begin(), c.descriptors.end(),
                             [&](const ServiceDescriptor& s) { return s.service_name == d.provider; });
      REQUIRE(it != c.descriptors.end());
      CHECK(evaluate_rules(c.task, *it).complete());
    }
    if (d.kind == DecisionKind::Composite) {
      std::set<std::string> all;
      std::size_t best = 0;
      std::size_t mine = 0;
      for (const auto& s : d.scores) {
        for (const auto& op : s.satisfied_ops()) all.insert(op);
        best = std::max(best, s.satisfied);
        if (s.descriptor_name == d.coordinator) mine = s.satisfied;
        CHECK_FALSE(s.complete());
      }
      CHECK(all.size() == c.task.required_ops.size());
      CHECK(mine == best);
    }
    if (d.kind == DecisionKind::NoMatch) {
      std::set<std::string> all;
      for (const auto& s : d.scores) {
        for (const auto& op : s.satisfied_ops()) all.insert(op);
      }
      CHECK(all.size() < c.task.required_ops.size());
    }
  }
}

TEST_CASE("adding a descriptor never degrades the decision") {
  Gen g(77);
  auto rank = [](DecisionKind k) { return k == DecisionKind::Direct ? 2 : k == DecisionKind::Composite ? 1 : 0; };
  for (int i = 0; i < 300; ++i) {
    MatchCase c = match_case(g);
    if (c.descriptors.size() < 2) continue;
    std::vector<ServiceDescriptor> fewer(c.descriptors.begin(), c.descriptors.end() - 1);
    Decision before = decide(c.task, fewer);
    Decision after = decide(c.task, c.descriptors);
    CHECK(rank(after.kind) >= rank(before.kind));
  }
}

TEST_CASE("task invariants") {
  CHECK(task("t", {"a"}).violations().empty());
  CHECK_FALSE(task("t", {}).violations().empty());
  CHECK_FALSE(task("t", {"a", "a"}).violations().empty());
  CHECK_FALSE(task("t", {"a"}, {kTitle, p("title", ParamType::Integer)}).violations().empty());
}

TEST_CASE("task and decision JSON round trip") {
  TaskSpec t = bookstore_task();
  t.expected_outputs = {p("total_price", ParamType::Real)};
  CHECK(TaskSpec::from_json(t.to_json()) == t);
  std::vector<ServiceDescriptor> ds{agg(), eng(), med()};
  Decision d = decide(t, ds);
  CHECK(Decision::from_json(d.to_json()) == d);
  CHECK_THROWS_AS(TaskSpec::from_json(Json::parse(R"({"task_id":"x"})")), std::invalid_argument);
}

TEST_CASE("trigger allocates increasing ids") {
  Trigger trig;
  std::vector<ServiceDescriptor> ds{eng()};
  TriggerEvent a = trig.raise(task("a", {"x"}), ds);
  TriggerEvent b = trig.raise(task("b", {"x"}), ds);
  TriggerEvent c = trig.raise(task("a", {"x"}), ds, Cause::Replay);
  CHECK(a.event_id == 1);
  CHECK(b.event_id == 2);
  CHECK(c.event_id == 3);
  CHECK(c.cause == Cause::Replay);
  CHECK(a.logical_time < b.logical_time);
  CHECK(a.considered == std::vector<std::string>{"server2"});
  CHECK_FALSE(a.result.has_value());
}

TEST_CASE("event line has the fixed key order") {
  Trigger trig;
  std::vector<ServiceDescriptor> ds{eng()};
  TriggerEvent e = decided(trig, task("a", {"EngBooksSearch"}, {kTitle}), ds);
  std::string line = e.to_json().dump();
  std::size_t prev = 0;
  for (const char* key : {"\"event_id\"", "\"logical_time\"", "\"cause\"", "\"task\"", "\"considered\"", "\"decision\""}) {
    std::size_t at = line.find(key);
    REQUIRE(at != std::string::npos);
    CHECK(at >= prev);
    prev = at;
  }
  CHECK(line.find(R"("decision":{"kind":"Direct","provider":"server2","coordinator":null)") != std::string::npos);
  CHECK(TriggerEvent::from_json(Json::parse(line)) == e);
}

TEST_CASE("record_event appends one line per decision") {
  auto path = temp_file("one.jsonl");
  TriggerRepository repo(path, true);
  Trigger trig;
  std::vector<ServiceDescriptor> ds{eng()};
  repo.record(decided(trig, task("a", {"EngBooksSearch"}, {kTitle}), ds));
  CHECK(line_count(path) == 1);
  repo.record(decided(trig, task("b", {"EngBooksSearch"}, {kTitle}), ds));
  CHECK(line_count(path) == 2);
  CHECK(repo.lines().size() == 2);
}

TEST_CASE("record_event rejects undecided and out-of-order events") {
  TriggerRepository repo;
  Trigger trig(5);
  std::vector<ServiceDescriptor> ds{eng()};
  TriggerEvent open = trig.raise(task("a", {"x"}), ds);
  CHECK_THROWS_AS(repo.record(open), std::invalid_argument);
  TriggerEvent e = decided(trig, task("b", {"x"}), ds);
  repo.record(e);
  CHECK_THROWS_AS(repo.record(e), std::invalid_argument);
}

TEST_CASE("unwritable log path is an IoError") {
  CHECK_THROWS_AS(TriggerRepository("/nonexistent/dir/events.jsonl"), IoError);
}

TEST_CASE("concurrent recorders keep the file monotone") {
  auto path = temp_file("soak.jsonl");
  TriggerRepository repo(path, true);
  Trigger trig;
  std::vector<ServiceDescriptor> ds{eng(), med()};
  std::vector<std::thread> ts;
  for (int i = 0; i < 100; ++i) {
    ts.emplace_back([&, i] {
      TaskSpec t = task("t" + std::to_string(i), {i % 2 ? "EngBooksSearch" : "MedicalBooksSearch"}, {kTitle});
      repo.record(decided(trig, t, ds));
    });
  }
  for (auto& t : ts) t.join();
  auto events = load_events(path);
  REQUIRE(events.size() == 100);
  for (std::size_t i = 0; i < events.size(); ++i) CHECK(events[i].event_id == i + 1);
}

TEST_CASE("load_events") {
  SUBCASE("empty file") {
    auto path = temp_file("empty.jsonl");
    std::ofstream(path).close();
    CHECK(load_events(path).empty());
  }
  SUBCASE("round trip") {
    auto path = temp_file("rt.jsonl");
    std::vector<TriggerEvent> written;
    {
      TriggerRepository repo(path, true);
      Trigger trig;
      std::vector<ServiceDescriptor> ds{agg(), eng(), med()};
      for (const auto& t : {bookstore_task(), task("x", {"ChemBooksSearch"}), task("y", {"EngBooksSearch"}, {kTitle})}) {
        written.push_back(decided(trig, t, ds));
        repo.record(written.back());
      }
    }
    CHECK(load_events(path) == written);
  }
  SUBCASE("non-monotone ids") {
    Trigger trig;
    std::vector<ServiceDescriptor> ds{eng()};
    std::string text;
    for (std::uint64_t id : {1, 3, 2}) {
      TriggerEvent e = decided(trig, task("t", {"x"}), ds);
      e.event_id = id;
      text += e.to_json().dump() + "\n";
    }
    try {
      parse_events(text);
      FAIL("expected CorruptLog");
    } catch (const CorruptLog& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("parse failure") {
    Trigger trig;
    std::vector<ServiceDescriptor> ds{eng()};
    std::string text = decided(trig, task("t", {"x"}), ds).to_json().dump() + "\n{\"event_id\":\n";
    try {
      parse_events(text);
      FAIL("expected CorruptLog");
    } catch (const CorruptLog& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_events("/nonexistent/events.jsonl"), IoError); }
}

TEST_CASE("gather_descriptors") {
  auto setup = [](Network& net, std::vector<std::unique_ptr<Node>>& nodes) {
    for (const char* id : {"server3", "server1", "server2"}) {
      nodes.push_back(std::make_unique<Node>(id, std::vector<OperationImpl>{book_search(std::string("Op") + id, eng_rows())}));
      nodes.back()->attach(net);
    }
  };
  SUBCASE("all reachable") {
    Network net;
    std::vector<std::unique_ptr<Node>> nodes;
    setup(net, nodes);
    GatherResult r;
    net.spawn("c", 0, [&] { r = gather_descriptors("client", net); });
    net.run();
    REQUIRE(r.descriptors.size() == 3);
    CHECK(r.descriptors[0].service_name == "server1");
    CHECK(r.descriptors[1].service_name == "server2");
    CHECK(r.descriptors[2].service_name == "server3");
    CHECK(r.skipped.empty());
  }
  SUBCASE("one unreachable") {
    NetConfig cfg;
    cfg.unreachable = {"server2"};
    Network net(cfg);
    std::vector<std::unique_ptr<Node>> nodes;
    setup(net, nodes);
    GatherResult r = gather_descriptors("client", net);
    CHECK(r.descriptors.size() == 2);
    REQUIRE(r.skipped.size() == 1);
    CHECK(r.skipped[0].node == "server2");
  }
  SUBCASE("no nodes") {
    Network net;
    CHECK_THROWS_AS(gather_descriptors("client", net), NoProviders);
  }
  SUBCASE("all unreachable") {
    NetConfig cfg;
    cfg.unreachable = {"server1", "server2", "server3"};
    Network net(cfg);
    std::vector<std::unique_ptr<Node>> nodes;
    setup(net, nodes);
    CHECK_THROWS_AS(gather_descriptors("client", net), NoProviders);
  }
}

TEST_CASE("client request logs skipped nodes and sends one task envelope") {
  NetConfig cfg;
  cfg.unreachable = {"server3"};
  Network net(cfg);
  Node s2("server2", {book_search("EngBooksSearch", eng_rows())});
  Node s3("server3", {book_search("MedicalBooksSearch", eng_rows())});
  s2.attach(net);
  s3.attach(net);
  Trigger trig(1, [&net] { return net.now(); });
  TriggerRepository repo;
  ClientApi api("client1", net, trig, repo);
  ClientApi::Outcome out;
  net.spawn("client1", 0, [&] {
    out = api.request(task("t", {"EngBooksSearch"}, {kTitle}), {{"title", Value::text("Compilers")}});
  });
  net.run();
  CHECK(out.event.skipped == std::vector<std::string>{"server3"});
  CHECK(out.event.considered == std::vector<std::string>{"server2"});
  REQUIRE(out.reply.has_value());
  CHECK_FALSE(out.reply->is_fault());
  CHECK(repo.lines().size() == 1);
  std::size_t invokes = 0;
  for (const auto& e : net.trace()) invokes += e.envelope.kind == EnvelopeKind::InvokeRequest ? 1 : 0;
  CHECK(invokes == 1);
}

TEST_CASE("NoMatch sends nothing after the broadcast") {
  Network net;
  Node s2("server2", {book_search("EngBooksSearch", eng_rows())});
  s2.attach(net);
  Trigger trig;
  TriggerRepository repo;
  ClientApi api("client1", net, trig, repo);
  ClientApi::Outcome out = api.request(task("t", {"ChemBooksSearch"}, {kTitle}), {});
  CHECK(out.event.result->kind == DecisionKind::NoMatch);
  CHECK_FALSE(out.reply.has_value());
  CHECK(net.trace_size() == 2);
  CHECK(repo.lines().size() == 1);
}

}
