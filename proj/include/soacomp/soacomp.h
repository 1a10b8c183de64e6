/* soacomp C interface. All strings are UTF-8 and NUL-terminated. Strings
 * returned through `char**` are owned by the caller and released with
 * soacomp_string_free. Handles are released with their matching _free. */
#ifndef SOACOMP_SOACOMP_H
#define SOACOMP_SOACOMP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SOACOMP_BUILDING_LIBRARY)
#    define SOACOMP_API __declspec(dllexport)
#  else
#    define SOACOMP_API __declspec(dllimport)
#  endif
#else
#  define SOACOMP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum soacomp_status {
  SOACOMP_OK = 0,
  SOACOMP_E_INVALID_ARGUMENT = 1,
  SOACOMP_E_SYNTAX = 2,
  SOACOMP_E_SCHEMA = 3,
  SOACOMP_E_INVARIANT = 4,
  SOACOMP_E_CONFIG = 5,
  SOACOMP_E_IO = 6,
  SOACOMP_E_CORRUPT_LOG = 7,
  SOACOMP_E_INTERNAL = 8
} soacomp_status;

typedef struct soacomp_descriptor soacomp_descriptor;
typedef struct soacomp_scenario soacomp_scenario;
typedef struct soacomp_run soacomp_run;
typedef struct soacomp_replay soacomp_replay;

SOACOMP_API const char* soacomp_version(void);
SOACOMP_API const char* soacomp_status_name(soacomp_status status);

/* Message of the most recent failure on the calling thread; "" if none. */
SOACOMP_API const char* soacomp_last_error(void);
/* Line of the most recent failure when known, else 0. */
SOACOMP_API size_t soacomp_last_error_line(void);

SOACOMP_API void soacomp_string_free(char* s);

/* Descriptors */
SOACOMP_API soacomp_status soacomp_descriptor_parse(const char* text, size_t len, soacomp_descriptor** out);
SOACOMP_API soacomp_status soacomp_descriptor_serialize(const soacomp_descriptor* d, char** out);
/* JSON array of {"code","where"}; "[]" for a valid descriptor. */
SOACOMP_API soacomp_status soacomp_descriptor_violations(const soacomp_descriptor* d, char** out);
SOACOMP_API soacomp_status soacomp_descriptor_to_json(const soacomp_descriptor* d, char** out);
SOACOMP_API size_t soacomp_descriptor_operation_count(const soacomp_descriptor* d);
SOACOMP_API void soacomp_descriptor_free(soacomp_descriptor* d);

/* Scenarios */
SOACOMP_API soacomp_status soacomp_scenario_load(const char* path, soacomp_scenario** out);
SOACOMP_API void soacomp_scenario_free(soacomp_scenario* s);

typedef struct soacomp_run_options {
  int has_seed;
  uint64_t seed;
  size_t clients; /* 0 means 1 */
  const char* const* fail_nodes;
  size_t fail_node_count;
  int has_latency;
  int64_t latency_ticks;
  const char* out_dir; /* NULL: no files written */
} soacomp_run_options;

SOACOMP_API void soacomp_run_options_init(soacomp_run_options* opts);
SOACOMP_API soacomp_status soacomp_scenario_run(const soacomp_scenario* s, const soacomp_run_options* opts,
                                                soacomp_run** out);
SOACOMP_API int soacomp_run_exit_code(const soacomp_run* r);
SOACOMP_API soacomp_status soacomp_run_metrics(const soacomp_run* r, char** out);
SOACOMP_API soacomp_status soacomp_run_events(const soacomp_run* r, char** out);
SOACOMP_API soacomp_status soacomp_run_trace(const soacomp_run* r, char** out);
SOACOMP_API void soacomp_run_free(soacomp_run* r);

/* Replay: reads an event log and re-decides it against a scenario. */
SOACOMP_API soacomp_status soacomp_replay_log(const char* log_path, const soacomp_scenario* s, soacomp_replay** out);
SOACOMP_API size_t soacomp_replay_divergence_count(const soacomp_replay* r);
/* 0 when no divergence, 1 otherwise. */
SOACOMP_API int soacomp_replay_exit_code(const soacomp_replay* r);
SOACOMP_API soacomp_status soacomp_replay_report(const soacomp_replay* r, char** out);
SOACOMP_API void soacomp_replay_free(soacomp_replay* r);

/* Exit status conventions shared with the command-line tool. */
#define SOACOMP_EXIT_OK 0
#define SOACOMP_EXIT_FAULT 1
#define SOACOMP_EXIT_NOMATCH 2
#define SOACOMP_EXIT_CONFIG 3
#define SOACOMP_EXIT_CORRUPT_LOG 4

#ifdef __cplusplus
}
#endif

#endif
