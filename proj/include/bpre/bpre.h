#ifndef BPRE_BPRE_H
#define BPRE_BPRE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define BPRE_API __declspec(dllexport)
#else
#define BPRE_API __attribute__((visibility("default")))
#endif

/* Status codes. BPRE_CONFIG, BPRE_NUMERIC and BPRE_BUDGET equal the runner's
 * process exit codes 2, 3 and 4. */
typedef enum bpre_status {
  BPRE_OK = 0,
  BPRE_INVALID_ARGUMENT = 1,
  BPRE_CONFIG = 2,
  BPRE_NUMERIC = 3,
  BPRE_BUDGET = 4,
  BPRE_IO = 5,
  BPRE_BUFFER_TOO_SMALL = 6,
  BPRE_INTERNAL = 7
} bpre_status;

/* Opaque experiment configuration. */
typedef struct bpre_config bpre_config;

/* One stream label: a string when `name` is non-NULL, otherwise the integer `id`. */
typedef struct bpre_seed_label {
  const char* name;
  uint64_t id;
} bpre_seed_label;

BPRE_API const char* bpre_version(void);

/* Message of the last failed call on this thread ("" if none). */
BPRE_API const char* bpre_last_error(void);
/* Config key named by the last BPRE_CONFIG failure on this thread ("" if none). */
BPRE_API const char* bpre_last_error_key(void);

BPRE_API bpre_status bpre_config_new(bpre_config** out);
BPRE_API bpre_status bpre_config_parse(const char* text, bpre_config** out);
BPRE_API bpre_status bpre_config_load(const char* path, bpre_config** out);
BPRE_API void bpre_config_free(bpre_config* cfg);

BPRE_API bpre_status bpre_config_set(bpre_config* cfg, const char* key, const char* value);
BPRE_API bpre_status bpre_config_validate(const bpre_config* cfg);

/* String getters copy into `buf` (NUL-terminated) and report the required
 * size including the terminator in `*needed`. A NULL or short buffer yields
 * BPRE_BUFFER_TOO_SMALL with `*needed` set. */
BPRE_API bpre_status bpre_config_get(const bpre_config* cfg, const char* key, char* buf, size_t size, size_t* needed);
BPRE_API bpre_status bpre_config_serialize(const bpre_config* cfg, char* buf, size_t size, size_t* needed);
/* Git-style blob id of the canonical text: 40 hex digits + NUL. */
BPRE_API bpre_status bpre_config_hash(const bpre_config* cfg, char out[41]);

/* Runs the configured experiment. `*exit_code` receives the process exit code
 * (0 ok, 1 failed validation/IO, 2 config, 3 numeric, 4 budget). The status
 * is BPRE_OK whenever the run itself completed, even with failing rows. */
BPRE_API bpre_status bpre_run(const bpre_config* cfg, int* exit_code);

BPRE_API bpre_status bpre_derive_seed(uint64_t master, const bpre_seed_label* labels, size_t count, uint64_t* out);

#ifdef __cplusplus
}
#endif

#endif
