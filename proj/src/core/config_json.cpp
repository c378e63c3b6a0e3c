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

#include "config_json.hpp"

#include <cmath>

#include "odet/error.hpp"

namespace odet::detail {

namespace {

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

std::string pool_mode_name(PoolMode m) { return m == PoolMode::kFlatten ? "flatten" : "mean"; }

PoolMode pool_mode_from(const std::string& s) {
  if (s == "flatten") return PoolMode::kFlatten;
  if (s == "mean") return PoolMode::kMeanPool;
  throw ConfigError("unknown pooling mode '" + s + "' (expected flatten or mean)");
}

std::string ap_mode_name(ApMode m) { return m == ApMode::kVoc07ElevenPoint ? "voc07" : "all_points"; }

ApMode ap_mode_from(const std::string& s) {
  if (s == "voc07") return ApMode::kVoc07ElevenPoint;
  if (s == "all_points") return ApMode::kAllPoints;
  throw ConfigError("unknown AP mode '" + s + "' (expected voc07 or all_points)");
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json to_json(const SynthConfig& c) {
  return json{{"map_h", c.map_h},
              {"map_w", c.map_w},
              {"channels", c.channels},
              {"stride", c.stride},
              {"n_classes", c.n_classes},
              {"min_objects", c.min_objects},
              {"max_objects", c.max_objects},
              {"min_size", c.min_size},
              {"max_size", c.max_size},
              {"signature_strength", c.signature_strength},
              {"noise_sigma", c.noise_sigma},
              {"prototype_correlation", c.prototype_correlation},
              {"prototype_seed", c.prototype_seed},
              {"seed", c.seed}};
}

void from_json(const json& j, SynthConfig& c) {
  get(j, "map_h", c.map_h);
  get(j, "map_w", c.map_w);
  get(j, "channels", c.channels);
  get(j, "stride", c.stride);
  get(j, "n_classes", c.n_classes);
  get(j, "min_objects", c.min_objects);
  get(j, "max_objects", c.max_objects);
  get(j, "min_size", c.min_size);
  get(j, "max_size", c.max_size);
  get(j, "signature_strength", c.signature_strength);
  get(j, "noise_sigma", c.noise_sigma);
  get(j, "prototype_correlation", c.prototype_correlation);
  get(j, "prototype_seed", c.prototype_seed);
  get(j, "seed", c.seed);
}

json to_json(const SynthTaskConfig& c) {
  json j = to_json(c.base);
  j["n_train"] = c.n_train;
  j["n_val"] = c.n_val;
  j["n_test"] = c.n_test;
  return j;
}

void from_json(const json& j, SynthTaskConfig& c) {
  from_json(j, c.base);
  get(j, "n_train", c.n_train);
  get(j, "n_val", c.n_val);
  get(j, "n_test", c.n_test);
}

json to_json(const KernelHyperParams& c) {
  return json{{"sigma", c.sigma},           {"lambda", c.lambda}, {"m_centers", c.m_centers},
              {"cg_max_iter", c.cg_max_iter}, {"cg_tol", c.cg_tol}, {"positive_weight", c.positive_weight}};
}

void from_json(const json& j, KernelHyperParams& c) {
  get(j, "sigma", c.sigma);
  get(j, "lambda", c.lambda);
  get(j, "m_centers", c.m_centers);
  get(j, "cg_max_iter", c.cg_max_iter);
  get(j, "cg_tol", c.cg_tol);
  get(j, "positive_weight", c.positive_weight);
}

json to_json(const MinibootstrapConfig& c) {
  return json{{"n_batches", c.n_batches},
              {"batch_size", c.batch_size},
              {"hard_threshold", c.hard_threshold},
              {"max_hard_set", c.max_hard_set}};
}

void from_json(const json& j, MinibootstrapConfig& c) {
  get(j, "n_batches", c.n_batches);
  get(j, "batch_size", c.batch_size);
  get(j, "hard_threshold", c.hard_threshold);
  get(j, "max_hard_set", c.max_hard_set);
}

json to_json(const AnchorConfig& c) {
  return json{{"scales", c.scales}, {"aspect_ratios", c.aspect_ratios}, {"stride", c.stride}};
}

void from_json(const json& j, AnchorConfig& c) {
  get(j, "scales", c.scales);
  get(j, "aspect_ratios", c.aspect_ratios);
  get(j, "stride", c.stride);
}

json to_json(const RpnConfig& c) {
  return json{{"assignment",
               {{"positive_iou", c.assignment.positive_iou},
                {"negative_iou", c.assignment.negative_iou},
                {"boundary_fraction", c.assignment.boundary_fraction}}},
              {"minibootstrap", to_json(c.minibootstrap)},
              {"kernel", to_json(c.kernel)},
              {"ridge_lambda", c.ridge_lambda},
              {"context_radius", c.context_radius},
              {"proposals",
               {{"pre_nms_top_k", c.proposals.pre_nms_top_k},
                {"nms_threshold", c.proposals.nms_threshold},
                {"post_nms_top_n", c.proposals.post_nms_top_n}}}};
}

void from_json(const json& j, RpnConfig& c) {
  if (j.contains("anchors")) from_json(j.at("anchors"), c.anchors);
  if (j.contains("assignment")) {
    const auto& a = j.at("assignment");
    get(a, "positive_iou", c.assignment.positive_iou);
    get(a, "negative_iou", c.assignment.negative_iou);
    get(a, "boundary_fraction", c.assignment.boundary_fraction);
  }
  if (j.contains("minibootstrap")) from_json(j.at("minibootstrap"), c.minibootstrap);
  if (j.contains("kernel")) from_json(j.at("kernel"), c.kernel);
  get(j, "ridge_lambda", c.ridge_lambda);
  get(j, "context_radius", c.context_radius);
  if (j.contains("proposals")) {
    const auto& p = j.at("proposals");
    get(p, "pre_nms_top_k", c.proposals.pre_nms_top_k);
    get(p, "nms_threshold", c.proposals.nms_threshold);
    get(p, "post_nms_top_n", c.proposals.post_nms_top_n);
  }
}

json to_json(const DetectorConfig& c) {
  return json{{"features",
               {{"pool", c.features.pool},
                {"samples_per_bin", c.features.samples_per_bin},
                {"mode", pool_mode_name(c.features.mode)},
                {"context_radius", c.features.context_radius}}},
              {"fg_iou", c.fg_iou},
              {"bg_iou", c.bg_iou},
              {"inject_ground_truth", c.inject_ground_truth},
              {"train_proposals", c.train_proposals},
              {"minibootstrap", to_json(c.minibootstrap)},
              {"kernel", to_json(c.kernel)},
              {"ridge_lambda", c.ridge_lambda},
              {"score_threshold", c.score_threshold},
              {"nms_threshold", c.nms_threshold},
              {"max_detections", c.max_detections}};
}

void from_json(const json& j, DetectorConfig& c) {
  if (j.contains("features")) {
    const auto& f = j.at("features");
    get(f, "pool", c.features.pool);
    get(f, "samples_per_bin", c.features.samples_per_bin);
    if (f.contains("mode")) c.features.mode = pool_mode_from(f.at("mode").get<std::string>());
    get(f, "context_radius", c.features.context_radius);
  }
  get(j, "fg_iou", c.fg_iou);
  get(j, "bg_iou", c.bg_iou);
  get(j, "inject_ground_truth", c.inject_ground_truth);
  get(j, "train_proposals", c.train_proposals);
  if (j.contains("minibootstrap")) from_json(j.at("minibootstrap"), c.minibootstrap);
  if (j.contains("kernel")) from_json(j.at("kernel"), c.kernel);
  get(j, "ridge_lambda", c.ridge_lambda);
  get(j, "score_threshold", c.score_threshold);
  get(j, "nms_threshold", c.nms_threshold);
  get(j, "max_detections", c.max_detections);
}

json to_json(const ExperimentConfig& c) {
  return json{{"train_manifest", c.train_manifest},
              {"val_manifest", c.val_manifest},
              {"test_manifest", c.test_manifest},
              {"rpn_model", c.rpn_model},
              {"anchors", to_json(c.anchors)},
              {"rpn", to_json(c.rpn)},
              {"detector", to_json(c.detector)},
              {"grid", {{"sigma", c.grid.sigma}, {"lambda", c.grid.lambda}}},
              {"proposal_counts", c.proposal_counts},
              {"detect_proposals", c.detect_proposals},
              {"eval",
               {{"ar_top_n", c.eval.ar_top_n},
                {"ar_iou_thresholds", c.eval.ar_match.iou_thresholds},
                {"map_iou", c.eval.map_iou},
                {"ap_mode", ap_mode_name(c.eval.ap_mode)}}},
              {"output_dir", c.output_dir},
              {"seed", c.seed},
              {"workers", c.workers}};
}

void from_json(const json& j, ExperimentConfig& c) {
  get(j, "train_manifest", c.train_manifest);
  get(j, "val_manifest", c.val_manifest);
  get(j, "test_manifest", c.test_manifest);
  get(j, "rpn_model", c.rpn_model);
  if (j.contains("anchors")) from_json(j.at("anchors"), c.anchors);
  if (j.contains("rpn")) from_json(j.at("rpn"), c.rpn);
  if (j.contains("detector")) from_json(j.at("detector"), c.detector);
  if (j.contains("grid")) {
    get(j.at("grid"), "sigma", c.grid.sigma);
    get(j.at("grid"), "lambda", c.grid.lambda);
  }
  get(j, "proposal_counts", c.proposal_counts);
  get(j, "detect_proposals", c.detect_proposals);
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    get(e, "ar_top_n", c.eval.ar_top_n);
    get(e, "ar_iou_thresholds", c.eval.ar_match.iou_thresholds);
    get(e, "map_iou", c.eval.map_iou);
    if (e.contains("ap_mode")) c.eval.ap_mode = ap_mode_from(e.at("ap_mode").get<std::string>());
  }
  get(j, "output_dir", c.output_dir);
  get(j, "seed", c.seed);
  get(j, "workers", c.workers);
}

void merge_strict(json& base, const json& patch, const std::string& where) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string name = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config field '" + name + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      if (!it.value().is_object()) throw ConfigError("config field '" + name + "' must be an object");
      merge_strict(slot, it.value(), name);
    } else {
      slot = it.value();
    }
  }
}

void apply_overrides(json& base, std::span<const std::string> overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + ov + "' must look like name=value");
    }
    const std::string name = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    // Build {"a": {"b": value}} from "a.b" and merge it.
    json patch = value;
    std::size_t end = name.size();
    for (;;) {
      const auto dot = name.rfind('.', end - 1);
      const std::size_t start = dot == std::string::npos ? 0 : dot + 1;
      const std::string key = name.substr(start, end - start);
      if (key.empty()) throw ConfigError("override '" + ov + "' has an empty name component");
      patch = json{{key, patch}};
      if (dot == std::string::npos) break;
      end = dot;
    }
    merge_strict(base, patch);
  }
}

json to_json(const MapResult& m) {
  json per = json::array();
  for (const auto& ap : m.per_class_ap) per.push_back(ap ? json(*ap) : json(nullptr));
  return json{{"map", number_or_null(m.map)}, {"per_class_ap", per}, {"warnings", m.warnings}};
}

json to_json(std::span<const ArPoint> curve) {
  json out = json::array();
  for (const auto& p : curve) out.push_back({{"n", p.n}, {"ar", p.ar}, {"truncated", p.truncated}});
  return out;
}

}  // namespace odet::detail
