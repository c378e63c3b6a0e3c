// Copyright 2026 The odet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* C interface to the odet library.
 *
 * Objects are opaque handles released with their *_free function. Every
 * call returns an odet_status; on failure odet_last_error() describes the
 * problem (per thread, valid until the next call on that thread).
 * Strings returned through char** are heap-allocated and must be released
 * with odet_string_free().
 */
#ifndef ODET_ODET_H_
#define ODET_ODET_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ODET_API __declspec(dllexport)
#else
#define ODET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum odet_status {
  ODET_OK = 0,
  ODET_ERR_INVALID_ARGUMENT = 1,
  ODET_ERR_CONFIG = 2,
  ODET_ERR_DATA = 3,
  ODET_ERR_TRAINING = 4,
  ODET_ERR_DOMAIN = 5,
  ODET_ERR_DIMENSION = 6,
  ODET_ERR_INTERNAL = 7
} odet_status;

typedef struct odet_dataset odet_dataset;
typedef struct odet_rpn odet_rpn;
typedef struct odet_detector odet_detector;

ODET_API const char* odet_version(void);
ODET_API const char* odet_last_error(void);
ODET_API void odet_string_free(char* s);

/* Configuration. Each resolver merges `json` (may be NULL or empty) over the
 * defaults, applies "dotted.name=value" overrides and returns the complete
 * configuration as JSON. Unknown fields are ODET_ERR_CONFIG. */
ODET_API odet_status odet_experiment_config_resolve(const char* json, const char* const* overrides,
                                                    size_t n_overrides, char** out_json);
ODET_API odet_status odet_synth_config_resolve(const char* json, const char* const* overrides,
                                               size_t n_overrides, char** out_json);
ODET_API odet_status odet_rpn_config_resolve(const char* json, const char* const* overrides,
                                             size_t n_overrides, char** out_json);
ODET_API odet_status odet_detector_config_resolve(const char* json, const char* const* overrides,
                                                  size_t n_overrides, char** out_json);

/* Writes <out_dir>/{train,val,test}/manifest.json plus feature files.
 * out_json receives the three manifest paths. */
ODET_API odet_status odet_synth_generate(const char* config_json, const char* out_dir, char** out_json);

ODET_API odet_status odet_dataset_open(const char* manifest_path, odet_dataset** out);
ODET_API void odet_dataset_free(odet_dataset* ds);
ODET_API odet_status odet_dataset_size(const odet_dataset* ds, size_t* out);
ODET_API odet_status odet_dataset_num_classes(const odet_dataset* ds, int* out);

/* On-line RPN. report_json may be NULL. */
ODET_API odet_status odet_rpn_train(const odet_dataset* train, const char* config_json, uint64_t seed,
                                    int workers, odet_rpn** out, char** report_json);
ODET_API odet_status odet_rpn_load(const char* path, odet_rpn** out);
ODET_API odet_status odet_rpn_save(const odet_rpn* rpn, const char* path);
ODET_API void odet_rpn_free(odet_rpn* rpn);

/* Proposals for one image as rows of (x1, y1, x2, y2, score). *count always
 * receives the number of rows; pass rows = NULL to query it. A capacity
 * smaller than the row count is ODET_ERR_INVALID_ARGUMENT. */
ODET_API odet_status odet_rpn_propose(const odet_rpn* rpn, const odet_dataset* ds, size_t image, int top_n,
                                      double* rows, size_t capacity, size_t* count);
/* Writes <dir>/<image id>.txt for every image. */
ODET_API odet_status odet_rpn_write_proposals(const odet_rpn* rpn, const odet_dataset* ds, int top_n,
                                              const char* dir, int workers);

/* On-line detection module, trained on the RPN's proposals. */
ODET_API odet_status odet_detector_train(const odet_dataset* train, const odet_rpn* rpn,
                                         const char* config_json, uint64_t seed, int workers,
                                         odet_detector** out, char** report_json);
ODET_API odet_status odet_detector_load(const char* path, odet_detector** out);
ODET_API odet_status odet_detector_save(const odet_detector* det, const char* path);
ODET_API void odet_detector_free(odet_detector* det);

/* Detections for one image as rows of (class_id, x1, y1, x2, y2, score);
 * same buffer convention as odet_rpn_propose. */
ODET_API odet_status odet_detector_detect(const odet_detector* det, const odet_rpn* rpn,
                                          const odet_dataset* ds, size_t image, int top_n, double* rows,
                                          size_t capacity, size_t* count);
ODET_API odet_status odet_detector_write_detections(const odet_detector* det, const odet_rpn* rpn,
                                                    const odet_dataset* ds, int top_n, const char* dir,
                                                    int workers);

/* Evaluation over dump directories (<dir>/<image id>.txt). */
ODET_API odet_status odet_eval_ar(const char* manifest_path, const char* proposal_dir, int top_n,
                                  char** out_json);
/* ap_mode: "voc07" or "all_points". */
ODET_API odet_status odet_eval_map(const char* manifest_path, const char* detection_dir, double iou,
                                   const char* ap_mode, char** out_json);
ODET_API odet_status odet_ar_curve(const char* manifest_path, const char* proposal_dir, const int* n_values,
                                   size_t n_count, char** out_json);

/* Full protocols. The config JSON is merged over the defaults. */
ODET_API odet_status odet_run_experiment(const char* config_json, char** report_json);
ODET_API odet_status odet_hyperparameter_search(const char* config_json, int analysis, char** result_json);

#ifdef __cplusplus
}
#endif

#endif /* ODET_ODET_H_ */
