/*
 * C interface of the class-aware graph classification library.
 *
 * Objects are opaque handles created by *_load / *_from_json / care_run_cv and
 * released with the matching *_free function. Every fallible call returns a
 * care_status; on failure care_last_error() describes the problem (the text
 * is thread-local and valid until the next call on the same thread).
 * Strings returned through char** are heap-allocated and must be released
 * with care_string_free().
 */
#ifndef CARE_CARE_H
#define CARE_CARE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CARE_API __declspec(dllexport)
#else
#define CARE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum care_status {
  CARE_OK = 0,
  CARE_ERR_USAGE = 1,    /* invalid argument or configuration */
  CARE_ERR_DATA = 2,     /* unreadable or malformed input, invalid data */
  CARE_ERR_NUMERIC = 3,  /* non-finite values during training */
  CARE_ERR_INTERNAL = 4  /* anything else */
} care_status;

typedef struct care_config care_config;
typedef struct care_dataset care_dataset;
typedef struct care_result care_result;

/* Called after every epoch of care_run_cv. */
typedef void (*care_epoch_callback)(int fold, int epoch, double train_loss, double val_loss,
                                    double val_accuracy, void* user);

CARE_API const char* care_version(void);
CARE_API const char* care_last_error(void);
CARE_API void care_string_free(char* s);

/* Configuration. Unknown keys are rejected; missing keys take defaults. */
CARE_API care_status care_config_from_json(const char* json, care_config** out);
CARE_API care_status care_config_load(const char* path, care_config** out);
CARE_API care_status care_config_set_seed(care_config* config, uint64_t seed);
CARE_API care_status care_config_set_output_dir(care_config* config, const char* dir);
CARE_API care_status care_config_output_dir(const care_config* config, char** out);
CARE_API care_status care_config_resolved_json(const care_config* config, char** out);
CARE_API void care_config_free(care_config* config);

/* Datasets in TUDataset text layout. `name` may be NULL (directory name is
 * used); `feature_policy` may be NULL or "auto". */
CARE_API care_status care_dataset_load(const char* dir, const char* name, const char* feature_policy,
                                       care_dataset** out);
/* Loads the dataset named by the configuration. */
CARE_API care_status care_dataset_load_for_config(const care_config* config, care_dataset** out);
/* {"name", "graphs", "classes", "mean_nodes", "mean_edges", "class_histogram", "feature_dim"} */
CARE_API care_status care_dataset_stats_json(const care_dataset* dataset, char** out);
CARE_API void care_dataset_free(care_dataset* dataset);

/* 10-fold cross-validation. With a non-NULL `out_dir` the run result, traces,
 * embeddings and the resolved configuration are written there. */
CARE_API care_status care_run_cv(const care_dataset* dataset, const care_config* config, const char* out_dir,
                                 care_epoch_callback callback, void* user, care_result** out);
CARE_API care_status care_result_json(const care_result* result, char** out);
CARE_API care_status care_result_accuracy(const care_result* result, double* mean, double* std_dev);
CARE_API void care_result_free(care_result* result);

/* Runs the cross product of `grid_json` (e.g. {"lambda1": [0.1, 1]}) over the
 * base configuration, one sub-directory per cell under `out_dir`, plus
 * summary.csv ranked by mean accuracy. `summary_json` receives the ranking. */
CARE_API care_status care_ablate(const care_config* base, const char* grid_json, const char* out_dir,
                                 care_epoch_callback callback, void* user, char** summary_json);

/* Separability metrics {silhouette, si, hm, cd} of an embeddings CSV. */
CARE_API care_status care_metrics_from_csv(const char* path, char** out_json);

/* Parameter-matched complexity comparison. `table` may be NULL. */
CARE_API care_status care_vcbound_report(uint64_t n, uint64_t h2, uint64_t d, char** out_json, char** table);
/* Exhaustive check over n in [1, n_max], h2 in [1, h2_max] and the given depths. */
CARE_API care_status care_vcbound_sweep(uint64_t n_max, uint64_t h2_max, const uint64_t* depths,
                                        size_t depth_count, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* CARE_CARE_H */
