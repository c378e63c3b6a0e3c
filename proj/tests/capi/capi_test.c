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

/* Exercises the C interface from plain C: a tiny synthetic task trained and
 * evaluated end to end, plus the error paths. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "odet/odet.h"

static int failures = 0;

#define EXPECT(cond)                                                  \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: EXPECT(%s) failed\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

#define EXPECT_OK(call)                                               \
  do {                                                                \
    odet_status s_ = (call);                                          \
    if (s_ != ODET_OK) {                                              \
      fprintf(stderr, "%s:%d: %s -> %d (%s)\n", __FILE__, __LINE__, #call, (int)s_, odet_last_error()); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

/* Crude field lookup in pretty-printed JSON; good enough for flat keys. */
static int json_has(const char* json, const char* key) { return json != NULL && strstr(json, key) != NULL; }

int main(int argc, char** argv) {
  const char* root = argc > 1 ? argv[1] : "capi_scratch";
  char path[1024];
  char* text = NULL;

  EXPECT(odet_version() != NULL && strlen(odet_version()) > 0);

  /* Configuration resolution and errors. */
  {
    const char* ov[] = {"n_train=20", "n_val=4", "n_test=6", "map_h=12", "map_w=12"};
    char* synth = NULL;
    EXPECT_OK(odet_synth_config_resolve(NULL, ov, 5, &synth));
    EXPECT(json_has(synth, "\"n_train\": 20"));

    const char* bad[] = {"no_such_field=1"};
    EXPECT(odet_synth_config_resolve(NULL, bad, 1, &text) == ODET_ERR_CONFIG);
    EXPECT(strstr(odet_last_error(), "no_such_field") != NULL);
    EXPECT(odet_rpn_config_resolve("{not json", NULL, 0, &text) == ODET_ERR_CONFIG);
    EXPECT(odet_detector_config_resolve(NULL, NULL, 0, NULL) == ODET_ERR_INVALID_ARGUMENT);

    snprintf(path, sizeof path, "%s/data", root);
    EXPECT_OK(odet_synth_generate(synth, path, &text));
    EXPECT(json_has(text, "manifest.json"));
    odet_string_free(text);
    odet_string_free(synth);
  }

  odet_dataset* train = NULL;
  odet_dataset* test = NULL;
  snprintf(path, sizeof path, "%s/data/train/manifest.json", root);
  EXPECT_OK(odet_dataset_open(path, &train));
  snprintf(path, sizeof path, "%s/data/test/manifest.json", root);
  EXPECT_OK(odet_dataset_open(path, &test));
  {
    odet_dataset* missing = NULL;
    EXPECT(odet_dataset_open("/no/such/manifest.json", &missing) == ODET_ERR_DATA);
    EXPECT(missing == NULL);
  }
  if (train == NULL || test == NULL) return 1;

  size_t n = 0;
  int classes = 0;
  EXPECT_OK(odet_dataset_size(train, &n));
  EXPECT(n == 20);
  EXPECT_OK(odet_dataset_num_classes(train, &classes));
  EXPECT(classes == 5);

  /* RPN. */
  const char* rpn_ov[] = {"minibootstrap.batch_size=300", "kernel.m_centers=200"};
  char* rpn_cfg = NULL;
  EXPECT_OK(odet_rpn_config_resolve(NULL, rpn_ov, 2, &rpn_cfg));
  odet_rpn* rpn = NULL;
  char* report = NULL;
  EXPECT_OK(odet_rpn_train(train, rpn_cfg, 3, 1, &rpn, &report));
  EXPECT(json_has(report, "anchors"));
  odet_string_free(report);
  if (rpn == NULL) return 1;

  size_t count = 0;
  EXPECT_OK(odet_rpn_propose(rpn, test, 0, 50, NULL, 0, &count));
  EXPECT(count > 0 && count <= 50);
  double* rows = (double*)malloc(sizeof(double) * 6 * (count + 1));
  EXPECT(odet_rpn_propose(rpn, test, 0, 50, rows, count - 1, &count) == ODET_ERR_INVALID_ARGUMENT);
  EXPECT_OK(odet_rpn_propose(rpn, test, 0, 50, rows, count, &count));
  for (size_t i = 1; i < count; ++i) EXPECT(rows[5 * i + 4] <= rows[5 * (i - 1) + 4]);
  for (size_t i = 0; i < count; ++i) EXPECT(rows[5 * i] < rows[5 * i + 2] && rows[5 * i + 1] < rows[5 * i + 3]);
  EXPECT(odet_rpn_propose(rpn, test, 1000, 50, NULL, 0, &count) != ODET_OK);

  snprintf(path, sizeof path, "%s/rpn.orpn", root);
  EXPECT_OK(odet_rpn_save(rpn, path));
  odet_rpn* rpn2 = NULL;
  EXPECT_OK(odet_rpn_load(path, &rpn2));
  {
    size_t c2 = 0;
    double* rows2 = (double*)malloc(sizeof(double) * 5 * 50);
    EXPECT_OK(odet_rpn_propose(rpn2, test, 0, 50, rows2, 50, &c2));
    EXPECT(c2 == count && memcmp(rows, rows2, sizeof(double) * 5 * c2) == 0);
    free(rows2);
  }
  odet_rpn_free(rpn2);
  EXPECT(odet_rpn_load("/no/such/model.orpn", &rpn2) == ODET_ERR_DATA);

  /* Detector. */
  const char* det_ov[] = {"minibootstrap.batch_size=300", "kernel.m_centers=200"};
  char* det_cfg = NULL;
  EXPECT_OK(odet_detector_config_resolve(NULL, det_ov, 2, &det_cfg));
  odet_detector* det = NULL;
  EXPECT_OK(odet_detector_train(train, rpn, det_cfg, 3, 1, &det, NULL));
  if (det == NULL) return 1;
  count = 0;
  EXPECT_OK(odet_detector_detect(det, rpn, test, 0, 300, NULL, 0, &count));
  free(rows);
  rows = (double*)malloc(sizeof(double) * 6 * (count + 1));
  EXPECT_OK(odet_detector_detect(det, rpn, test, 0, 300, rows, count + 1, &count));
  for (size_t i = 0; i < count; ++i) EXPECT(rows[6 * i] >= 0 && rows[6 * i] < 5);
  snprintf(path, sizeof path, "%s/det.odet", root);
  EXPECT_OK(odet_detector_save(det, path));

  /* Dumps and evaluation. */
  char props[1024], dets[1024], manifest[1024];
  snprintf(props, sizeof props, "%s/proposals", root);
  snprintf(dets, sizeof dets, "%s/detections", root);
  snprintf(manifest, sizeof manifest, "%s/data/test/manifest.json", root);
  EXPECT_OK(odet_rpn_write_proposals(rpn, test, 300, props, 1));
  EXPECT_OK(odet_detector_write_detections(det, rpn, test, 300, dets, 1));
  EXPECT_OK(odet_eval_ar(manifest, props, 100, &text));
  EXPECT(json_has(text, "\"ar\""));
  odet_string_free(text);
  EXPECT_OK(odet_eval_map(manifest, dets, 0.5, "voc07", &text));
  EXPECT(json_has(text, "\"map\""));
  odet_string_free(text);
  EXPECT(odet_eval_map(manifest, dets, 0.5, "median", &text) == ODET_ERR_CONFIG);
  {
    const int ns[] = {10, 50, 100};
    EXPECT_OK(odet_ar_curve(manifest, props, ns, 3, &text));
    EXPECT(json_has(text, "\"curve\""));
    odet_string_free(text);
  }
  EXPECT(odet_eval_ar(manifest, "/no/such/dir", 100, &text) == ODET_ERR_DATA);

  /* Full protocol with a missing manifest. */
  EXPECT(odet_run_experiment("{\"train_manifest\": \"/no/such.json\", \"val_manifest\": \"/no/such.json\", "
                             "\"test_manifest\": \"/no/such.json\"}",
                             &text) == ODET_ERR_CONFIG);
  EXPECT(odet_run_experiment("{\"bogus\": 1}", &text) == ODET_ERR_CONFIG);

  free(rows);
  odet_string_free(rpn_cfg);
  odet_string_free(det_cfg);
  odet_detector_free(det);
  odet_rpn_free(rpn);
  odet_dataset_free(train);
  odet_dataset_free(test);
  odet_string_free(NULL);
  odet_rpn_free(NULL);

  if (failures == 0) printf("capi: all checks passed\n");
  return failures == 0 ? 0 : 1;
}
