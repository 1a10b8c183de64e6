// soacomp: run scenarios and replay their event logs.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "soacomp/soacomp.h"

namespace {

int report(soacomp_status st) {
  std::cerr << "soacomp: " << soacomp_status_name(st) << ": " << soacomp_last_error() << "\n";
  switch (st) {
    case SOACOMP_E_CORRUPT_LOG:
    case SOACOMP_E_IO:
      return SOACOMP_EXIT_CORRUPT_LOG;
    default:
      return SOACOMP_EXIT_CONFIG;
  }
}

std::string take(char* s) {
  std::string out = s ? s : "";
  soacomp_string_free(s);
  return out;
}

struct RunArgs {
  std::string scenario;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t clients = 1;
  std::vector<std::string> fail_nodes;
  std::optional<std::int64_t> latency;
};

int do_run(const RunArgs& a) {
  soacomp_scenario* sc = nullptr;
  if (auto st = soacomp_scenario_load(a.scenario.c_str(), &sc); st != SOACOMP_OK) return report(st);

  std::vector<const char*> fails;
  for (const auto& f : a.fail_nodes) fails.push_back(f.c_str());
  soacomp_run_options opts;
  soacomp_run_options_init(&opts);
  opts.has_seed = 1;
  opts.seed = a.seed;
  opts.clients = a.clients;
  opts.fail_nodes = fails.data();
  opts.fail_node_count = fails.size();
  if (a.latency) {
    opts.has_latency = 1;
    opts.latency_ticks = *a.latency;
  }
  opts.out_dir = a.out.c_str();

  soacomp_run* run = nullptr;
  soacomp_status st = soacomp_scenario_run(sc, &opts, &run);
  soacomp_scenario_free(sc);
  if (st != SOACOMP_OK) return report(st);

  char* metrics = nullptr;
  if (soacomp_run_metrics(run, &metrics) == SOACOMP_OK) std::cout << take(metrics) << "\n";
  int rc = soacomp_run_exit_code(run);
  soacomp_run_free(run);
  return rc;
}

int do_replay(const std::string& log, const std::string& scenario, const std::string& out) {
  soacomp_scenario* sc = nullptr;
  if (auto st = soacomp_scenario_load(scenario.c_str(), &sc); st != SOACOMP_OK) return report(st);
  soacomp_replay* rep = nullptr;
  soacomp_status st = soacomp_replay_log(log.c_str(), sc, &rep);
  soacomp_scenario_free(sc);
  if (st != SOACOMP_OK) return report(st);

  char* text = nullptr;
  std::string body;
  if (soacomp_replay_report(rep, &text) == SOACOMP_OK) body = take(text);
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    f << body << "\n";
    if (!f) {
      std::cerr << "soacomp: cannot write " << out << "\n";
      soacomp_replay_free(rep);
      return SOACOMP_EXIT_CORRUPT_LOG;
    }
  }
  std::cout << body << "\n";
  int rc = soacomp_replay_exit_code(rep);
  soacomp_replay_free(rep);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"service composition scenario runner"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "execute a scenario and write events.jsonl, trace.jsonl, metrics.json");
  run_cmd->add_option("--scenario", run.scenario, "scenario file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run.out, "artifact directory")->required();
  run_cmd->add_option("--seed", run.seed, "network seed")->required();
  run_cmd->add_option("--clients", run.clients, "concurrent logical clients")->check(CLI::PositiveNumber);
  run_cmd->add_option("--fail-node", run.fail_nodes, "mark a node unreachable (repeatable)");
  run_cmd->add_option("--latency", run.latency, "per-hop latency in ticks")->check(CLI::NonNegativeNumber);

  std::string log, scenario, out;
  auto* replay_cmd = app.add_subcommand("replay", "re-decide a logged run and report divergences");
  replay_cmd->add_option("--log", log, "events.jsonl")->required();
  replay_cmd->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--out", out, "also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : SOACOMP_EXIT_CONFIG;
  }

  if (*run_cmd) return do_run(run);
  return do_replay(log, scenario, out);
}
