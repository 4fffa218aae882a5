/* SPDX-License-Identifier: Apache-2.0 */

/*
 * C interface to the fieldrank library.
 *
 * Every function returns an fr_status. On failure a description of the most
 * recent error on the calling thread is available from fr_last_error().
 * Strings handed out through char** parameters are owned by the caller and
 * released with fr_string_free().
 */

#ifndef FIELDRANK_H
#define FIELDRANK_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(FIELDRANK_BUILDING_LIBRARY)
#define FR_API __declspec(dllexport)
#else
#define FR_API __declspec(dllimport)
#endif
#else
#define FR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fr_status {
    FR_OK = 0,
    /* Data, numeric or I/O failure while running. */
    FR_ERR_RUNTIME = 1,
    /* Invalid configuration or arguments. */
    FR_ERR_CONFIG = 2
} fr_status;

typedef struct fr_dataset fr_dataset;
typedef struct fr_model fr_model;

/* Receives one line of progress output, without the trailing newline. */
typedef void (*fr_log_fn)(const char* line, void* user);

FR_API const char* fr_version(void);
FR_API const char* fr_last_error(void);
FR_API void fr_string_free(char* s);

/* Datasets */

FR_API fr_status fr_dataset_load(const char* catalog_path, const char* log_path, fr_dataset** out);
/* gen_config_json: a synthetic-data config object; NULL uses defaults. */
FR_API fr_status fr_dataset_generate(const char* gen_config_json, fr_dataset** out);
FR_API fr_status fr_dataset_write(const fr_dataset* ds, const char* catalog_path, const char* log_path);
FR_API fr_status fr_dataset_session_count(const fr_dataset* ds, size_t* out);
FR_API fr_status fr_dataset_document_count(const fr_dataset* ds, size_t* out);
FR_API fr_status fr_dataset_session_length(const fr_dataset* ds, size_t session, size_t* out);
/* Writes a JSON array of violation messages; "[]" when the dataset is valid. */
FR_API fr_status fr_dataset_validate(const fr_dataset* ds, char** messages_json);
FR_API void fr_dataset_free(fr_dataset* ds);

/* Models */

/*
 * model_json: {"name", "family", "interactions", "first_order", "fields", "d",
 * "hidden_widths", "seed", "encoder": {"bucket_count", "shared_token_table"}}.
 * The dataset supplies the country vocabulary and image width; it may be NULL.
 */
FR_API fr_status fr_model_create(const char* model_json, const fr_dataset* ds, fr_model** out);
FR_API fr_status fr_model_load(const char* path, fr_model** out);
FR_API fr_status fr_model_save(const fr_model* model, const char* path);
/* Writes the model's configuration as JSON. */
FR_API fr_status fr_model_config(const fr_model* model, char** config_json);
/* Scores the candidates of one session; `capacity` must cover the session length. */
FR_API fr_status fr_model_score_session(const fr_model* model, const fr_dataset* ds, size_t session, double* scores,
                                        size_t capacity, size_t* written);
FR_API void fr_model_free(fr_model* model);

/* Metrics and statistics */

/* *defined is 0 (and *out NaN) when no item is relevant. */
FR_API fr_status fr_ndcg_at_k(const double* scores, const int* relevance, size_t n, size_t k, double* out,
                              int* defined);
FR_API fr_status fr_paired_ttest(const double* a, const double* b, size_t n, double* t, double* p);
FR_API fr_status fr_bonferroni(const double* p_values, size_t n, size_t m, double* out);

/* Commands */

/* Zero or NULL fields leave the config file's value in place. */
typedef struct fr_options {
    const char* out;
    int has_seed;
    uint64_t seed;
    size_t jobs;
    size_t folds;
    size_t k;
    int has_alpha;
    double alpha;
    fr_log_fn log;
    void* log_user;
} fr_options;

FR_API void fr_options_init(fr_options* opts);

FR_API fr_status fr_cmd_generate(const char* config_path, const fr_options* opts);
FR_API fr_status fr_cmd_crossval(const char* config_path, const fr_options* opts);
/* ms may be NULL with n_ms == 0 to use the config's list or the default ladder. */
FR_API fr_status fr_cmd_select(const char* config_path, const size_t* ms, size_t n_ms, const fr_options* opts);
/* *all_passed is 1 when every variant is below the error threshold. */
FR_API fr_status fr_cmd_gradcheck(int corrupt, const fr_options* opts, int* all_passed);
FR_API fr_status fr_cmd_report(const char* report_path, char** text);

#ifdef __cplusplus
}
#endif

#endif
