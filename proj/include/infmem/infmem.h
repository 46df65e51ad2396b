#ifndef INFMEM_H
#define INFMEM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define INFMEM_API __declspec(dllexport)
#else
#define INFMEM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum infmem_status {
    INFMEM_OK = 0,
    INFMEM_ERR_INVALID_ARGUMENT = 1,
    INFMEM_ERR_SHAPE = 2,
    INFMEM_ERR_NOT_POSITIVE_DEFINITE = 3,
    INFMEM_ERR_NUMERIC = 4,
    INFMEM_ERR_IO = 5,
    INFMEM_ERR_STATE = 6,
    INFMEM_ERR_INTERNAL = 7
} infmem_status;

/* Message of the last failed call on this thread; "" if none. */
INFMEM_API const char* infmem_last_error(void);
INFMEM_API const char* infmem_status_name(infmem_status s);
INFMEM_API const char* infmem_version(void);

/* run configuration */
typedef struct infmem_config infmem_config;

INFMEM_API infmem_status infmem_config_new(infmem_config** out);
INFMEM_API infmem_status infmem_config_load(const char* path, infmem_config** out);
INFMEM_API infmem_status infmem_config_parse(const char* text, infmem_config** out);
/* key is "section.key", e.g. "train.steps" */
INFMEM_API infmem_status infmem_config_set(infmem_config* cfg, const char* key, const char* value);
/* Copies the value (NUL-terminated) into buf when it fits; *needed gets the full size incl. NUL. */
INFMEM_API infmem_status infmem_config_get(const infmem_config* cfg, const char* key, char* buf, size_t cap,
                                           size_t* needed);
/* INFMEM_<SECTION>_<KEY> variables of the process environment */
INFMEM_API infmem_status infmem_config_apply_env(infmem_config* cfg);
INFMEM_API infmem_status infmem_config_save(const infmem_config* cfg, const char* path);
INFMEM_API void infmem_config_free(infmem_config* cfg);

/* experiments */
INFMEM_API infmem_status infmem_gen_data(const infmem_config* cfg);
/* resume may be NULL; stop_at 0 runs to train.steps. steps_out may be NULL. */
INFMEM_API infmem_status infmem_train(const infmem_config* cfg, const char* resume, uint64_t stop_at,
                                      uint64_t* steps_out);
/* data_dir NULL or "" keeps the checkpoint's dataset. Appends to <out_dir>/eval.csv. */
INFMEM_API infmem_status infmem_eval(const char* checkpoint, const char* split, const char* out_dir,
                                     const char* data_dir, double* accuracy, double* nll);

typedef struct infmem_sweep_options {
    const size_t* lengths;
    size_t n_lengths;
    const size_t* basis;
    size_t n_basis;
    size_t embed;
    size_t seeds;
    uint64_t seed;
    uint64_t train_steps;     /* 0: mse only, accuracy column is nan */
    const infmem_config* run; /* model/train settings for the accuracy runs; may be NULL */
} infmem_sweep_options;

INFMEM_API void infmem_sweep_defaults(infmem_sweep_options* opt);
INFMEM_API infmem_status infmem_sweep_basis(const infmem_sweep_options* opt, const char* csv);

typedef struct infmem_bench_options {
    size_t basis;
    size_t embed;
    size_t length;
    size_t heads;
    size_t updates;
    size_t repeats;
    int sticky;
    uint64_t seed;
} infmem_bench_options;

INFMEM_API void infmem_bench_defaults(infmem_bench_options* opt);
INFMEM_API infmem_status infmem_bench_memory(const infmem_bench_options* opt, const char* csv);

INFMEM_API infmem_status infmem_inspect_memory(const char* checkpoint, const char* out_dir, const char* split,
                                               size_t index, size_t points, size_t bins);

/* model */
typedef struct infmem_model infmem_model;

INFMEM_API infmem_status infmem_model_new(const infmem_config* cfg, uint64_t seed, infmem_model** out);
INFMEM_API infmem_status infmem_model_load(const char* checkpoint, infmem_model** out);
INFMEM_API infmem_status infmem_model_save(const infmem_model* model, const char* checkpoint);
INFMEM_API size_t infmem_model_vocab(const infmem_model* model);
INFMEM_API size_t infmem_model_parameter_count(const infmem_model* model);
/* Feeds n tokens from a fresh state in segments of input_len; logits is n × vocab, row-major. */
INFMEM_API infmem_status infmem_model_logits(const infmem_model* model, const int* tokens, size_t n,
                                             uint64_t seed, double* logits);
INFMEM_API void infmem_model_free(infmem_model* model);

/* continuous long-term memory */
typedef struct infmem_memory infmem_memory;

/* samples 0 means one per basis function */
INFMEM_API infmem_status infmem_memory_new(size_t basis, const double* widths, size_t n_widths, size_t embed,
                                           double tau, size_t samples, double ridge, infmem_memory** out);
/* x is rows × embed, row-major. With means/variances (n_records each) the past is resampled
   from their attention histogram over `bins` bins; with n_records 0, linearly. */
INFMEM_API infmem_status infmem_memory_update(infmem_memory* mem, const double* x, size_t rows,
                                              const double* means, const double* variances, size_t n_records,
                                              size_t bins, uint64_t seed);
/* out has embed entries */
INFMEM_API infmem_status infmem_memory_evaluate(const infmem_memory* mem, double t, double* out);
INFMEM_API uint64_t infmem_memory_update_count(const infmem_memory* mem);
INFMEM_API size_t infmem_memory_state_bytes(const infmem_memory* mem);
INFMEM_API void infmem_memory_free(infmem_memory* mem);

#ifdef __cplusplus
}
#endif

#endif
