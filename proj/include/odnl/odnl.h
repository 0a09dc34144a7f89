/* Copyright 2026 The odnl-lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#ifndef ODNL_ODNL_H_
#define ODNL_ODNL_H_

/* C interface to the odnl library. Every function returns an odnl_status;
 * on failure odnl_last_error() describes the problem for the calling thread.
 * Objects are opaque and released with the matching *_free function.
 * Functions that take an odnl_config read the data, train, noise and
 * auxiliary settings from it and stamp its resolved key=value lines at the
 * top of every CSV they write. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ODNL_API __declspec(dllexport)
#else
#define ODNL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum odnl_status {
  ODNL_OK = 0,
  ODNL_ERR_INPUT = 1,
  ODNL_ERR_CONFIG = 2,
  ODNL_ERR_NUMERIC = 3,
  ODNL_ERR_IO = 4,
  ODNL_ERR_INTERNAL = 5
} odnl_status;

typedef struct odnl_config odnl_config;
typedef struct odnl_dataset odnl_dataset;
typedef struct odnl_pool odnl_pool;
typedef struct odnl_network odnl_network;

ODNL_API const char* odnl_last_error(void);
ODNL_API const char* odnl_status_name(odnl_status status);

/* Configuration. Keys are flattened "section.key" names. */
ODNL_API odnl_status odnl_config_create(odnl_config** out);
ODNL_API odnl_status odnl_config_load(const char* path, odnl_config** out);
ODNL_API void odnl_config_free(odnl_config* config);
ODNL_API odnl_status odnl_config_set(odnl_config* config, const char* key, const char* value);
/* Copies the value (NUL-terminated) into buf when it fits; *needed receives
 * the required size including the terminator. */
ODNL_API odnl_status odnl_config_get(const odnl_config* config, const char* key, char* buf,
                                     size_t capacity, size_t* needed);
/* All resolved settings, one "# key=value" line each. */
ODNL_API odnl_status odnl_config_dump(const odnl_config* config, char* buf, size_t capacity,
                                      size_t* needed);

/* Datasets and auxiliary pools. */
ODNL_API odnl_status odnl_generate_blobs(const odnl_config* config, int n, uint64_t seed,
                                         odnl_dataset** out);
/* kind: "ring", "uniform" or "gaussian". */
ODNL_API odnl_status odnl_generate_openset_pool(const odnl_config* config, const char* kind, int m,
                                                uint64_t seed, odnl_pool** out);
ODNL_API odnl_status odnl_generate_closedset_pool(const odnl_config* config, int m, uint64_t seed,
                                                  odnl_pool** out);
ODNL_API odnl_status odnl_dataset_load(const char* path, odnl_dataset** out);
ODNL_API odnl_status odnl_dataset_save(const odnl_dataset* data, const odnl_config* config,
                                       const char* path);
ODNL_API void odnl_dataset_free(odnl_dataset* data);
ODNL_API odnl_status odnl_dataset_shape(const odnl_dataset* data, size_t* rows, size_t* dim,
                                        int* num_classes);
/* Copies row-major features (rows * dim) and the label columns; any output
 * pointer may be NULL. */
ODNL_API odnl_status odnl_dataset_export(const odnl_dataset* data, double* features,
                                         int* observed_labels, int* true_labels);
ODNL_API odnl_status odnl_pool_load(const char* path, odnl_pool** out);
ODNL_API odnl_status odnl_pool_save(const odnl_pool* pool, const odnl_config* config,
                                    const char* path);
ODNL_API void odnl_pool_free(odnl_pool* pool);
ODNL_API odnl_status odnl_pool_shape(const odnl_pool* pool, size_t* rows, size_t* dim);
ODNL_API odnl_status odnl_mix_pools(const odnl_pool* open_pool, const odnl_pool* closed_pool,
                                    double alpha, uint64_t seed, odnl_pool** out);

/* Label corruption. type: "symmetric", "circular", "instance" (needs
 * weak_model) or "open" (needs open_source). Unused arguments may be NULL. */
ODNL_API odnl_status odnl_corrupt(const odnl_dataset* data, const char* type, double rate,
                                  uint64_t seed, const odnl_pool* open_source,
                                  const odnl_network* weak_model, odnl_dataset** out);
/* Empirical k x k transition matrix (row-major) of a dataset's closed-set rows. */
ODNL_API odnl_status odnl_transition_matrix(const odnl_dataset* data, double* out,
                                            size_t capacity);

/* Networks. */
ODNL_API odnl_status odnl_network_load(const char* path, odnl_network** out);
ODNL_API odnl_status odnl_network_save(const odnl_network* net, const char* path);
ODNL_API void odnl_network_free(odnl_network* net);
ODNL_API odnl_status odnl_network_shape(const odnl_network* net, size_t* input_dim,
                                        size_t* output_dim, size_t* parameters);
ODNL_API odnl_status odnl_network_predict(const odnl_network* net, const double* x,
                                          size_t dim, double* probs, size_t k);

/* Training with the config's train.* settings. pool and test may be NULL.
 * metrics_path (may be NULL) receives the per-epoch metrics CSV. */
ODNL_API odnl_status odnl_train(const odnl_config* config, const odnl_dataset* train,
                                const odnl_pool* pool, const odnl_dataset* test, uint64_t seed,
                                const char* metrics_path, odnl_network** out);
/* Tunes eta over train.eta_candidates on a held-out split; report_path (may
 * be NULL) receives `eta,final_val_acc,best_val_acc,last_val_acc,late_drop`. */
ODNL_API odnl_status odnl_tune_eta(const odnl_config* config, const odnl_dataset* train,
                                   const odnl_pool* pool, uint64_t seed, const char* report_path,
                                   double* best_eta);
ODNL_API odnl_status odnl_accuracy(const odnl_network* net, const odnl_dataset* data,
                                   double* accuracy);

/* Noise analysis; writes the JSON report to report_path (may be NULL).
 * samples scales every Monte-Carlo budget (0 keeps the defaults). */
ODNL_API odnl_status odnl_analyze_noise(const odnl_network* net, const odnl_dataset* data,
                                        const odnl_pool* aux, size_t samples, double sigma,
                                        uint64_t seed, const char* report_path, int* all_passed);
ODNL_API odnl_status odnl_landscape(const odnl_network* net, const odnl_dataset* data,
                                    int resolution, double radius, uint64_t seed,
                                    const odnl_config* config, const char* csv_path,
                                    double* sharpness);

/* OOD evaluation with maximum softmax probability scores. metrics receives
 * {fpr95, auroc, aupr}. */
ODNL_API odnl_status odnl_ood_metrics(const double* in_scores, size_t n_in,
                                      const double* out_scores, size_t n_out, double* metrics);
/* One row per pool plus a mean row; pool_names may be NULL. */
ODNL_API odnl_status odnl_eval_ood(const odnl_network* net, const odnl_dataset* in_data,
                                   const odnl_pool* const* pools, const char* const* pool_names,
                                   size_t pool_count, const odnl_config* config,
                                   const char* csv_path, double* mean_metrics);

/* Experiments write into experiment.output_dir. */
ODNL_API odnl_status odnl_run_experiment(const odnl_config* config);
ODNL_API odnl_status odnl_sweep_size(const odnl_config* config, const int* sizes, size_t count);
ODNL_API odnl_status odnl_sweep_alpha(const odnl_config* config, const double* alphas,
                                      size_t count);
/* Recomputes the summary of a result directory into csv_path. */
ODNL_API odnl_status odnl_report(const char* directory, const char* csv_path);

#ifdef __cplusplus
}
#endif

#endif  // ODNL_ODNL_H_
