#ifndef FATLENS_H
#define FATLENS_H

#include <stddef.h>

#if defined(FL_BUILDING_LIBRARY)
#define FL_API __attribute__((visibility("default")))
#else
#define FL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes; the CLI uses 2, 3 and 4 as its exit codes. */
typedef enum fl_status {
  FL_OK = 0,
  FL_E_INVALID_ARGUMENT = 1,
  FL_E_MISSING_ARTIFACT = 2,
  FL_E_CONFIG = 3,
  FL_E_DATA = 4,
  FL_E_IO = 5,
  FL_E_NETWORK = 6,
  FL_E_INTERNAL = 7
} fl_status;

typedef struct fl_config fl_config;
typedef struct fl_result fl_result;

FL_API const char* fl_version(void);

/* Message of the last failed call on this thread; "" after success. */
FL_API const char* fl_last_error(void);

FL_API void fl_string_free(char* s);

/* ---- configuration ---- */

FL_API fl_status fl_config_new(fl_config** out);
FL_API void fl_config_free(fl_config* config);
FL_API fl_status fl_config_set(fl_config* config, const char* key, const char* value);
/* The returned pointer stays valid until the key is set again or the config is freed. */
FL_API fl_status fl_config_get(const fl_config* config, const char* key, const char** value);
FL_API fl_status fl_config_load_file(fl_config* config, const char* path);
FL_API fl_status fl_config_load_string(fl_config* config, const char* text);
FL_API fl_status fl_config_apply_env(fl_config* config);
/* Caller frees *json with fl_string_free. */
FL_API fl_status fl_config_to_json(const fl_config* config, char** json);

FL_API size_t fl_config_key_count(void);
FL_API const char* fl_config_key_name(size_t index);
FL_API const char* fl_config_key_default(size_t index);
FL_API const char* fl_config_key_help(size_t index);

/* ---- pipeline ---- */

FL_API size_t fl_stage_count(void);
FL_API const char* fl_stage_name(size_t index);

FL_API fl_status fl_run_stage(const fl_config* config, const char* stage, const char* command,
                              fl_result** out);
FL_API void fl_result_free(fl_result* result);
FL_API const char* fl_result_summary(const fl_result* result);
FL_API const char* fl_result_manifest_json(const fl_result* result);
FL_API size_t fl_result_artifact_count(const fl_result* result);
FL_API const char* fl_result_artifact_path(const fl_result* result, size_t index);
FL_API const char* fl_result_artifact_sha256(const fl_result* result, size_t index);

/* Re-runs the stage recorded in a manifest inside scratch_dir. *mismatches
   receives the number of artifacts whose digest differs; *report (may be NULL)
   lists them one per line and is freed with fl_string_free. */
FL_API fl_status fl_replay(const char* manifest, const char* scratch_dir, size_t* mismatches,
                           char** report);

/* ---- single operations ---- */

FL_API fl_status fl_auc_roc(const double* scores, const int* labels, size_t n, double* out);
FL_API fl_status fl_fk_grade(const char* text, double* out);
FL_API fl_status fl_sha256_file(const char* path, char** hex);

#ifdef __cplusplus
}
#endif

#endif
