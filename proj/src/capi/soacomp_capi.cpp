#include "soacomp/soacomp.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "soacomp/descriptor.hpp"
#include "soacomp/runner.hpp"
#include "soacomp/scenario.hpp"

struct soacomp_descriptor {
  soacomp::ServiceDescriptor d;
};

struct soacomp_scenario {
  soacomp::Scenario s;
};

struct soacomp_run {
  soacomp::RunResult r;
};

struct soacomp_replay {
  soacomp::ReplayReport r;
};

namespace {

thread_local std::string g_error;
thread_local std::size_t g_error_line = 0;

soacomp_status fail(soacomp_status st, const std::string& msg, std::size_t line = 0) {
  g_error = msg;
  g_error_line = line;
  return st;
}

soacomp_status ok() {
  g_error.clear();
  g_error_line = 0;
  return SOACOMP_OK;
}

soacomp_status emit(const std::string& s, char** out) {
  if (!out) return fail(SOACOMP_E_INVALID_ARGUMENT, "null output pointer");
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) return fail(SOACOMP_E_INTERNAL, "out of memory");
  std::memcpy(p, s.data(), s.size());
  p[s.size()] = '\0';
  *out = p;
  return ok();
}

// Maps every library exception onto a status.
template <typename F>
soacomp_status guarded(F&& f) {
  try {
    return f();
  } catch (const soacomp::SyntaxError& e) {
    return fail(SOACOMP_E_SYNTAX, e.what(), e.line());
  } catch (const soacomp::SchemaError& e) {
    return fail(SOACOMP_E_SCHEMA, e.what(), e.line());
  } catch (const soacomp::InvariantError& e) {
    return fail(SOACOMP_E_INVARIANT, e.what());
  } catch (const soacomp::ConfigError& e) {
    return fail(SOACOMP_E_CONFIG, e.what(), e.line());
  } catch (const soacomp::CorruptLog& e) {
    return fail(SOACOMP_E_CORRUPT_LOG, e.what(), e.line());
  } catch (const soacomp::IoError& e) {
    return fail(SOACOMP_E_IO, e.what());
  } catch (const std::exception& e) {
    return fail(SOACOMP_E_INTERNAL, e.what());
  } catch (...) {
    return fail(SOACOMP_E_INTERNAL, "unknown error");
  }
}

soacomp::Json params_json(const std::vector<soacomp::ParamSpec>& ps) {
  soacomp::Json a = soacomp::Json::array();
  for (const auto& p : ps) a.push_back({{"name", p.name}, {"type", soacomp::to_string(p.type)}});
  return a;
}

}  // namespace

extern "C" {

const char* soacomp_version(void) { return "0.1.0"; }

const char* soacomp_status_name(soacomp_status status) {
  switch (status) {
    case SOACOMP_OK: return "OK";
    case SOACOMP_E_INVALID_ARGUMENT: return "INVALID_ARGUMENT";
    case SOACOMP_E_SYNTAX: return "SYNTAX";
    case SOACOMP_E_SCHEMA: return "SCHEMA";
    case SOACOMP_E_INVARIANT: return "INVARIANT";
    case SOACOMP_E_CONFIG: return "CONFIG";
    case SOACOMP_E_IO: return "IO";
    case SOACOMP_E_CORRUPT_LOG: return "CORRUPT_LOG";
    case SOACOMP_E_INTERNAL: return "INTERNAL";
  }
  return "UNKNOWN";
}

const char* soacomp_last_error(void) { return g_error.c_str(); }
size_t soacomp_last_error_line(void) { return g_error_line; }

void soacomp_string_free(char* s) { std::free(s); }

soacomp_status soacomp_descriptor_parse(const char* text, size_t len, soacomp_descriptor** out) {
  if (!text || !out) return fail(SOACOMP_E_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    auto* h = new soacomp_descriptor{soacomp::parse_descriptor(std::string_view(text, len))};
    *out = h;
    return ok();
  });
}

soacomp_status soacomp_descriptor_serialize(const soacomp_descriptor* d, char** out) {
  if (!d) return fail(SOACOMP_E_INVALID_ARGUMENT, "null descriptor");
  return guarded([&] { return emit(soacomp::serialize_descriptor(d->d), out); });
}

soacomp_status soacomp_descriptor_violations(const soacomp_descriptor* d, char** out) {
  if (!d) return fail(SOACOMP_E_INVALID_ARGUMENT, "null descriptor");
  return guarded([&] {
    soacomp::Json a = soacomp::Json::array();
    for (const auto& v : soacomp::validate_descriptor(d->d)) {
      a.push_back({{"code", soacomp::to_string(v.code)}, {"where", v.where}});
    }
    return emit(a.dump(), out);
  });
}

soacomp_status soacomp_descriptor_to_json(const soacomp_descriptor* d, char** out) {
  if (!d) return fail(SOACOMP_E_INVALID_ARGUMENT, "null descriptor");
  return guarded([&] {
    soacomp::Json j;
    j["service_name"] = d->d.service_name;
    j["endpoint"] = d->d.endpoint;
    soacomp::Json ops = soacomp::Json::array();
    for (const auto& op : d->d.operations) {
      ops.push_back({{"name", op.name}, {"inputs", params_json(op.inputs)}, {"outputs", params_json(op.outputs)}});
    }
    j["operations"] = std::move(ops);
    return emit(j.dump(), out);
  });
}

size_t soacomp_descriptor_operation_count(const soacomp_descriptor* d) { return d ? d->d.operations.size() : 0; }

void soacomp_descriptor_free(soacomp_descriptor* d) { delete d; }

soacomp_status soacomp_scenario_load(const char* path, soacomp_scenario** out) {
  if (!path || !out) return fail(SOACOMP_E_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    *out = new soacomp_scenario{soacomp::load_scenario(path)};
    return ok();
  });
}

void soacomp_scenario_free(soacomp_scenario* s) { delete s; }

void soacomp_run_options_init(soacomp_run_options* opts) {
  if (opts) *opts = soacomp_run_options{0, 0, 1, nullptr, 0, 0, 0, nullptr};
}

soacomp_status soacomp_scenario_run(const soacomp_scenario* s, const soacomp_run_options* opts, soacomp_run** out) {
  if (!s || !out) return fail(SOACOMP_E_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    soacomp::RunOptions o;
    if (opts) {
      if (opts->has_seed) o.seed = opts->seed;
      o.clients = opts->clients == 0 ? 1 : opts->clients;
      for (size_t i = 0; i < opts->fail_node_count; ++i) {
        if (!opts->fail_nodes || !opts->fail_nodes[i]) return fail(SOACOMP_E_INVALID_ARGUMENT, "null fail node");
        o.fail_nodes.emplace_back(opts->fail_nodes[i]);
      }
      if (opts->has_latency) o.latency = opts->latency_ticks;
      if (opts->out_dir) o.out_dir = opts->out_dir;
    }
    *out = new soacomp_run{soacomp::run_scenario(s->s, o)};
    return ok();
  });
}

int soacomp_run_exit_code(const soacomp_run* r) { return r ? r->r.exit_code : SOACOMP_EXIT_CONFIG; }

soacomp_status soacomp_run_metrics(const soacomp_run* r, char** out) {
  if (!r) return fail(SOACOMP_E_INVALID_ARGUMENT, "null run");
  return guarded([&] { return emit(r->r.metrics.dump(2), out); });
}

soacomp_status soacomp_run_events(const soacomp_run* r, char** out) {
  if (!r) return fail(SOACOMP_E_INVALID_ARGUMENT, "null run");
  return emit(r->r.events_jsonl, out);
}

soacomp_status soacomp_run_trace(const soacomp_run* r, char** out) {
  if (!r) return fail(SOACOMP_E_INVALID_ARGUMENT, "null run");
  return emit(r->r.trace_jsonl, out);
}

void soacomp_run_free(soacomp_run* r) { delete r; }

soacomp_status soacomp_replay_log(const char* log_path, const soacomp_scenario* s, soacomp_replay** out) {
  if (!log_path || !s || !out) return fail(SOACOMP_E_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    auto events = soacomp::load_events(log_path);
    *out = new soacomp_replay{soacomp::replay(events, s->s)};
    return ok();
  });
}

size_t soacomp_replay_divergence_count(const soacomp_replay* r) { return r ? r->r.divergences.size() : 0; }

int soacomp_replay_exit_code(const soacomp_replay* r) {
  return r && r->r.divergences.empty() ? SOACOMP_EXIT_OK : SOACOMP_EXIT_FAULT;
}

soacomp_status soacomp_replay_report(const soacomp_replay* r, char** out) {
  if (!r) return fail(SOACOMP_E_INVALID_ARGUMENT, "null replay");
  return guarded([&] { return emit(r->r.to_json().dump(2), out); });
}

void soacomp_replay_free(soacomp_replay* r) { delete r; }

}  // extern "C"
