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

#include "odet/odet.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "odet/data.hpp"
#include "odet/detector.hpp"
#include "odet/error.hpp"
#include "odet/eval.hpp"
#include "odet/experiment.hpp"
#include "odet/parallel.hpp"
#include "odet/rpn.hpp"

struct odet_dataset {
  odet::Dataset data;
};

struct odet_rpn {
  odet::OnlineRpnModel model;
};

struct odet_detector {
  odet::OnlineDetectorModel model;
};

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

thread_local std::string g_last_error;

odet_status fail(odet_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs fn and converts any exception into a status code.
template <typename Fn>
odet_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return ODET_OK;
  } catch (const odet::Error& e) {
    return fail(static_cast<odet_status>(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(ODET_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(ODET_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ODET_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(ODET_ERR_INTERNAL, "unknown error");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw odet::Error(odet::ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string text_or_empty(const char* s) { return s == nullptr ? std::string() : std::string(s); }

std::vector<std::string> collect(const char* const* overrides, size_t n) {
  require(n == 0 || overrides != nullptr, "overrides is NULL");
  std::vector<std::string> out;
  for (size_t k = 0; k < n; ++k) {
    require(overrides[k] != nullptr, "override entry is NULL");
    out.emplace_back(overrides[k]);
  }
  return out;
}

odet::DatasetManifest read_manifest(const char* path) {
  require(path != nullptr, "manifest path is NULL");
  std::ifstream in(path);
  if (!in) throw odet::DataError(std::string("cannot open manifest ") + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return odet::parse_manifest(ss.str());
}

const odet::FeatureMap& map_of(const odet_dataset* ds, size_t image, std::shared_ptr<const odet::FeatureMap>& hold) {
  require(image < ds->data.size(), "image index out of range");
  hold = ds->data.feature_map(image);
  return *hold;
}

odet_status copy_rows(const std::vector<double>& flat, size_t width, double* rows, size_t capacity,
                      size_t* count) {
  const size_t n = flat.size() / width;
  *count = n;
  if (rows == nullptr) return ODET_OK;
  if (capacity < n) {
    return fail(ODET_ERR_INVALID_ARGUMENT,
                "buffer holds " + std::to_string(capacity) + " rows, " + std::to_string(n) + " needed");
  }
  std::copy(flat.begin(), flat.end(), rows);
  return ODET_OK;
}

json ar_json(const std::vector<std::vector<odet::ScoredBox>>& proposals,
             const std::vector<std::vector<odet::Box>>& gt, int top_n) {
  const odet::MatchConfig match;
  const int n[1] = {top_n};
  const auto point = odet::ar_curve(proposals, gt, n, match).front();
  json per = json::array();
  for (double t : match.iou_thresholds) {
    const odet::MatchConfig single{{t}};
    per.push_back({{"iou", t}, {"recall", odet::ar_curve(proposals, gt, n, single).front().ar}});
  }
  size_t total = 0;
  for (const auto& g : gt) total += g.size();
  return json{{"ar", point.ar},     {"top_n", top_n},         {"truncated", point.truncated},
              {"per_threshold", per}, {"images", gt.size()}, {"ground_truth", total}};
}

}  // namespace

extern "C" {

const char* odet_version(void) { return "1.0.0"; }

const char* odet_last_error(void) { return g_last_error.c_str(); }

void odet_string_free(char* s) { std::free(s); }

odet_status odet_experiment_config_resolve(const char* json_text, const char* const* overrides,
                                           size_t n_overrides, char** out_json) {
  return guarded([&] {
    require(out_json != nullptr, "out_json is NULL");
    const auto cfg = odet::parse_experiment_config(text_or_empty(json_text), collect(overrides, n_overrides));
    *out_json = dup_string(odet::experiment_config_to_json(cfg));
  });
}

odet_status odet_synth_config_resolve(const char* json_text, const char* const* overrides, size_t n_overrides,
                                      char** out_json) {
  return guarded([&] {
    require(out_json != nullptr, "out_json is NULL");
    const auto cfg = odet::parse_synth_task_config(text_or_empty(json_text), collect(overrides, n_overrides));
    cfg.validate();
    *out_json = dup_string(odet::synth_task_config_to_json(cfg));
  });
}

odet_status odet_rpn_config_resolve(const char* json_text, const char* const* overrides, size_t n_overrides,
                                    char** out_json) {
  return guarded([&] {
    require(out_json != nullptr, "out_json is NULL");
    const auto ov = collect(overrides, n_overrides);
    const auto cfg = odet::parse_rpn_config(text_or_empty(json_text), ov);
    cfg.validate();
    // Echo through the experiment schema's rpn section plus anchors.
    odet::ExperimentConfig e = odet::ExperimentConfig::benchmark();
    e.rpn = cfg;
    e.anchors = cfg.anchors;
    json j = json::parse(odet::experiment_config_to_json(e));
    json out = j["rpn"];
    out["anchors"] = j["anchors"];
    *out_json = dup_string(out.dump(2));
  });
}

odet_status odet_detector_config_resolve(const char* json_text, const char* const* overrides,
                                         size_t n_overrides, char** out_json) {
  return guarded([&] {
    require(out_json != nullptr, "out_json is NULL");
    const auto cfg = odet::parse_detector_config(text_or_empty(json_text), collect(overrides, n_overrides));
    cfg.validate();
    odet::ExperimentConfig e = odet::ExperimentConfig::benchmark();
    e.detector = cfg;
    *out_json = dup_string(json::parse(odet::experiment_config_to_json(e))["detector"].dump(2));
  });
}

odet_status odet_synth_generate(const char* config_json, const char* out_dir, char** out_json) {
  return guarded([&] {
    require(out_dir != nullptr, "out_dir is NULL");
    const auto cfg = odet::parse_synth_task_config(text_or_empty(config_json));
    const auto paths = odet::generate_synthetic_task(cfg, out_dir);
    if (out_json != nullptr) {
      *out_json = dup_string(
          json{{"train", paths.train.string()}, {"val", paths.val.string()}, {"test", paths.test.string()}}.dump(2));
    }
  });
}

odet_status odet_dataset_open(const char* manifest_path, odet_dataset** out) {
  return guarded([&] {
    require(manifest_path != nullptr && out != nullptr, "NULL argument");
    *out = new odet_dataset{odet::Dataset::load(manifest_path)};
  });
}

void odet_dataset_free(odet_dataset* ds) { delete ds; }

odet_status odet_dataset_size(const odet_dataset* ds, size_t* out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr, "NULL argument");
    *out = ds->data.size();
  });
}

odet_status odet_dataset_num_classes(const odet_dataset* ds, int* out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr, "NULL argument");
    *out = ds->data.num_classes();
  });
}

odet_status odet_rpn_train(const odet_dataset* train, const char* config_json, uint64_t seed, int workers,
                           odet_rpn** out, char** report_json) {
  return guarded([&] {
    require(train != nullptr && out != nullptr, "NULL argument");
    auto cfg = odet::parse_rpn_config(text_or_empty(config_json));
    cfg.seed = seed;
    cfg.workers = workers;
    auto r = odet::train_online_rpn(train->data, cfg);
    if (report_json != nullptr) {
      json anchors = json::array();
      for (const auto& a : r.anchors) {
        anchors.push_back({{"positives", a.positives},
                           {"negatives", a.negatives},
                           {"negatives_touched", a.negatives_touched},
                           {"degenerate", a.degenerate}});
      }
      *report_json = dup_string(json{{"anchors", anchors}, {"warnings", r.warnings}}.dump(2));
    }
    *out = new odet_rpn{std::move(r.model)};
  });
}

odet_status odet_rpn_load(const char* path, odet_rpn** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "NULL argument");
    *out = new odet_rpn{odet::load_rpn(path)};
  });
}

odet_status odet_rpn_save(const odet_rpn* rpn, const char* path) {
  return guarded([&] {
    require(rpn != nullptr && path != nullptr, "NULL argument");
    odet::save_rpn(rpn->model, path);
  });
}

void odet_rpn_free(odet_rpn* rpn) { delete rpn; }

odet_status odet_rpn_propose(const odet_rpn* rpn, const odet_dataset* ds, size_t image, int top_n, double* rows,
                             size_t capacity, size_t* count) {
  odet_status status = ODET_OK;
  const odet_status g = guarded([&] {
    require(rpn != nullptr && ds != nullptr && count != nullptr, "NULL argument");
    std::shared_ptr<const odet::FeatureMap> hold;
    const auto& map = map_of(ds, image, hold);
    const auto boxes = odet::propose_regions(rpn->model, map, ds->data.record(image).size, top_n);
    std::vector<double> flat;
    for (const auto& b : boxes) flat.insert(flat.end(), {b.box.x1, b.box.y1, b.box.x2, b.box.y2, b.score});
    status = copy_rows(flat, 5, rows, capacity, count);
  });
  return g != ODET_OK ? g : status;
}

odet_status odet_rpn_write_proposals(const odet_rpn* rpn, const odet_dataset* ds, int top_n, const char* dir,
                                     int workers) {
  return guarded([&] {
    require(rpn != nullptr && ds != nullptr && dir != nullptr, "NULL argument");
    fs::create_directories(dir);
    odet::parallel_for(ds->data.size(), workers, [&](std::size_t k) {
      const auto boxes =
          odet::propose_regions(rpn->model, *ds->data.feature_map(k), ds->data.record(k).size, top_n);
      odet::write_proposal_dump(fs::path(dir) / (ds->data.record(k).id + ".txt"), boxes);
    });
  });
}

odet_status odet_detector_train(const odet_dataset* train, const odet_rpn* rpn, const char* config_json,
                                uint64_t seed, int workers, odet_detector** out, char** report_json) {
  return guarded([&] {
    require(train != nullptr && rpn != nullptr && out != nullptr, "NULL argument");
    auto cfg = odet::parse_detector_config(text_or_empty(config_json));
    cfg.seed = seed;
    cfg.workers = workers;
    auto r = odet::train_online_detector(train->data, rpn->model, cfg, train->data.num_classes());
    if (report_json != nullptr) {
      json classes = json::array();
      for (const auto& c : r.classes) {
        classes.push_back({{"positives", c.positives},
                           {"negatives", c.negatives},
                           {"negatives_from_other_classes", c.negatives_from_other_classes},
                           {"negatives_touched", c.negatives_touched},
                           {"degenerate", c.degenerate}});
      }
      *report_json = dup_string(json{{"classes", classes}, {"warnings", r.warnings}}.dump(2));
    }
    *out = new odet_detector{std::move(r.model)};
  });
}

odet_status odet_detector_load(const char* path, odet_detector** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "NULL argument");
    *out = new odet_detector{odet::load_detector(path)};
  });
}

odet_status odet_detector_save(const odet_detector* det, const char* path) {
  return guarded([&] {
    require(det != nullptr && path != nullptr, "NULL argument");
    odet::save_detector(det->model, path);
  });
}

void odet_detector_free(odet_detector* det) { delete det; }

odet_status odet_detector_detect(const odet_detector* det, const odet_rpn* rpn, const odet_dataset* ds,
                                 size_t image, int top_n, double* rows, size_t capacity, size_t* count) {
  odet_status status = ODET_OK;
  const odet_status g = guarded([&] {
    require(det != nullptr && rpn != nullptr && ds != nullptr && count != nullptr, "NULL argument");
    std::shared_ptr<const odet::FeatureMap> hold;
    const auto& map = map_of(ds, image, hold);
    const auto dets = odet::detect(det->model, rpn->model, map, ds->data.record(image).size, top_n);
    std::vector<double> flat;
    for (const auto& d : dets) {
      flat.insert(flat.end(), {static_cast<double>(d.class_id), d.box.x1, d.box.y1, d.box.x2, d.box.y2, d.score});
    }
    status = copy_rows(flat, 6, rows, capacity, count);
  });
  return g != ODET_OK ? g : status;
}

odet_status odet_detector_write_detections(const odet_detector* det, const odet_rpn* rpn, const odet_dataset* ds,
                                           int top_n, const char* dir, int workers) {
  return guarded([&] {
    require(det != nullptr && rpn != nullptr && ds != nullptr && dir != nullptr, "NULL argument");
    fs::create_directories(dir);
    odet::parallel_for(ds->data.size(), workers, [&](std::size_t k) {
      const auto dets =
          odet::detect(det->model, rpn->model, *ds->data.feature_map(k), ds->data.record(k).size, top_n);
      odet::write_detection_dump(fs::path(dir) / (ds->data.record(k).id + ".txt"), dets);
    });
  });
}

odet_status odet_eval_ar(const char* manifest_path, const char* proposal_dir, int top_n, char** out_json) {
  return guarded([&] {
    require(proposal_dir != nullptr && out_json != nullptr, "NULL argument");
    require(top_n >= 1, "top_n must be >= 1");
    const auto manifest = read_manifest(manifest_path);
    const auto proposals = odet::read_proposal_dir(proposal_dir, manifest);
    *out_json = dup_string(ar_json(proposals, odet::gt_boxes(manifest), top_n).dump(2));
  });
}

odet_status odet_eval_map(const char* manifest_path, const char* detection_dir, double iou, const char* ap_mode,
                          char** out_json) {
  return guarded([&] {
    require(detection_dir != nullptr && out_json != nullptr, "NULL argument");
    if (!(iou > 0.0 && iou < 1.0)) throw odet::ConfigError("IoU threshold must be in (0, 1)");
    const std::string mode = ap_mode == nullptr ? "voc07" : ap_mode;
    odet::ApMode m;
    if (mode == "voc07") {
      m = odet::ApMode::kVoc07ElevenPoint;
    } else if (mode == "all_points") {
      m = odet::ApMode::kAllPoints;
    } else {
      throw odet::ConfigError("unknown AP mode '" + mode + "' (expected voc07 or all_points)");
    }
    const auto manifest = read_manifest(manifest_path);
    const auto dets = odet::read_detection_dir(detection_dir, manifest);
    const auto r = odet::mean_ap(dets, odet::gt_objects(manifest), static_cast<int>(manifest.classes.size()), iou, m);
    json per = json::array();
    for (size_t c = 0; c < r.per_class_ap.size(); ++c) {
      per.push_back({{"class", manifest.classes[c]},
                     {"ap", r.per_class_ap[c] ? json(*r.per_class_ap[c]) : json(nullptr)}});
    }
    *out_json = dup_string(
        json{{"map", r.map}, {"iou", iou}, {"ap_mode", mode}, {"per_class", per}, {"warnings", r.warnings}}.dump(2));
  });
}

odet_status odet_ar_curve(const char* manifest_path, const char* proposal_dir, const int* n_values, size_t n_count,
                          char** out_json) {
  return guarded([&] {
    require(proposal_dir != nullptr && out_json != nullptr, "NULL argument");
    require(n_values != nullptr && n_count > 0, "n_values is empty");
    const auto manifest = read_manifest(manifest_path);
    const auto proposals = odet::read_proposal_dir(proposal_dir, manifest);
    const auto curve = odet::ar_curve(proposals, odet::gt_boxes(manifest),
                                      std::span<const int>(n_values, n_count));
    json pts = json::array();
    for (const auto& p : curve) pts.push_back({{"n", p.n}, {"ar", p.ar}, {"truncated", p.truncated}});
    *out_json = dup_string(json{{"curve", pts}}.dump(2));
  });
}

odet_status odet_run_experiment(const char* config_json, char** report_json) {
  return guarded([&] {
    require(report_json != nullptr, "report_json is NULL");
    const auto cfg = odet::parse_experiment_config(text_or_empty(config_json));
    *report_json = dup_string(odet::run_experiment(cfg).to_json());
  });
}

odet_status odet_hyperparameter_search(const char* config_json, int analysis, char** result_json) {
  return guarded([&] {
    require(result_json != nullptr, "result_json is NULL");
    const auto cfg = odet::parse_experiment_config(text_or_empty(config_json));
    *result_json = dup_string(odet::hyperparameter_search(cfg, analysis != 0).to_json());
  });
}

}  // extern "C"
