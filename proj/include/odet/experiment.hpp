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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odet/data.hpp"
#include "odet/detector.hpp"
#include "odet/eval.hpp"
#include "odet/rpn.hpp"

namespace odet {

/// A train/val/test triple drawn from one synthetic task.
struct SynthTaskConfig {
  SynthConfig base;  // n_images, split and id_prefix are set per split
  int n_train = 200;
  int n_val = 50;
  int n_test = 100;

  /// Defaults of the synthetic benchmark.
  static SynthTaskConfig benchmark();
  SynthConfig split_config(const std::string& split) const;
  void validate() const;
};

struct SynthTaskPaths {
  std::filesystem::path train;
  std::filesystem::path val;
  std::filesystem::path test;
};

/// Writes <dir>/{train,val,test}/manifest.json with their feature files.
SynthTaskPaths generate_synthetic_task(const SynthTaskConfig& cfg, const std::filesystem::path& dir);

struct KernelGrid {
  std::vector<double> sigma;
  std::vector<double> lambda;
};

struct EvalConfig {
  int ar_top_n = 100;
  MatchConfig ar_match;
  double map_iou = 0.5;
  ApMode ap_mode = ApMode::kVoc07ElevenPoint;
};

struct ExperimentConfig {
  std::string train_manifest;
  std::string val_manifest;   // optional for run, required for search
  std::string test_manifest;  // optional
  std::string rpn_model;      // when set, this saved RPN is used as-is (frozen)
  AnchorConfig anchors{{32.0, 64.0}, {0.5, 1.0, 2.0}, 16};
  RpnConfig rpn;
  DetectorConfig detector;
  KernelGrid grid;            // detector kernel (sigma, lambda) for search
  std::vector<int> proposal_counts{10, 25, 50, 100, 150, 300};
  int detect_proposals = 300;  // proposals scored by the detector at test time
  EvalConfig eval;
  std::string output_dir;
  std::uint64_t seed = 0;
  int workers = 0;

  /// Defaults of the synthetic benchmark pipeline.
  static ExperimentConfig benchmark();
  /// Copies anchors, seed and workers into the stage configs.
  RpnConfig resolved_rpn() const;
  DetectorConfig resolved_detector() const;
  void validate(bool check_paths = true) const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         std::span<const std::string> overrides = {});
std::string experiment_config_to_json(const ExperimentConfig& cfg);

SynthTaskConfig parse_synth_task_config(const std::string& json_text,
                                        std::span<const std::string> overrides = {});
std::string synth_task_config_to_json(const SynthTaskConfig& cfg);

RpnConfig parse_rpn_config(const std::string& json_text, std::span<const std::string> overrides = {});
DetectorConfig parse_detector_config(const std::string& json_text,
                                     std::span<const std::string> overrides = {});

struct SplitMetrics {
  double ar = 0.0;  // AR@eval.ar_top_n
  std::vector<ArPoint> ar_curve;
  MapResult map;
};

struct ExperimentReport {
  double rpn_train_seconds = 0.0;
  double detector_train_seconds = 0.0;
  double total_seconds = 0.0;
  bool rpn_frozen = false;
  std::optional<SplitMetrics> val;
  std::optional<SplitMetrics> test;
  std::vector<std::string> warnings;
  ExperimentConfig config;

  std::string to_json() const;
};

/// Two-stage protocol: the on-line RPN is trained first, then the detection
/// head on its proposals. Artifacts go to cfg.output_dir when it is set.
/// Errors are rethrown with the failing stage in the message.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

struct GridPoint {
  double sigma = 0.0;
  double lambda = 0.0;
  std::optional<double> val_map;   // nullopt when training failed
  std::optional<double> test_map;  // analysis mode only
  std::string error;
};

struct SearchResult {
  std::vector<GridPoint> table;
  std::size_t best = 0;
  ExperimentReport report;  // val/test metrics of the selected point

  std::string table_csv() const;
  std::string to_json() const;
};

/// Highest validation mAP; ties go to the smaller lambda, then the smaller
/// sigma, then the earlier entry. nullopt when every point failed.
std::optional<std::size_t> select_grid_point(std::span<const GridPoint> table);

/// Trains the RPN once, then one detector per grid point; picks the highest
/// validation mAP (ties: smallest lambda, then smallest sigma). The test
/// manifest is opened only after the selection is made. With `analysis` every
/// grid point is also scored on test.
SearchResult hyperparameter_search(const ExperimentConfig& cfg, bool analysis = false);

std::string trace_csv(std::span<const MinibootstrapTraceLine> trace);

}  // namespace odet
