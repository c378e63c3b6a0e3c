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
#include <span>
#include <string>
#include <vector>

#include "odet/data.hpp"
#include "odet/featuremap.hpp"
#include "odet/kernel.hpp"
#include "odet/minibootstrap.hpp"
#include "odet/rpn.hpp"

namespace odet {

inline constexpr int kBackgroundLabel = -1;
inline constexpr int kIgnoreLabel = -2;

struct RegionFeatureConfig {
  int pool = 7;
  int samples_per_bin = 2;
  PoolMode mode = PoolMode::kFlatten;
  int context_radius = 0;  // neighbourhood stacked into each cell before pooling
};

struct DetectorConfig {
  RegionFeatureConfig features;
  double fg_iou = 0.5;   // foreground when max IoU >= fg_iou
  double bg_iou = 0.3;   // background when max IoU < bg_iou
  bool inject_ground_truth = true;
  int train_proposals = 300;
  MinibootstrapConfig minibootstrap;
  KernelHyperParams kernel;
  double ridge_lambda = 0.0;  // 0 uses kernel.lambda
  double score_threshold = 0.0;
  double nms_threshold = 0.3;
  int max_detections = 100;
  std::uint64_t seed = 0;
  int workers = 0;

  void validate() const;
};

struct DetectorAssignment {
  std::vector<Box> boxes;       // proposals, then injected ground truth
  std::vector<int> labels;      // class id, kBackgroundLabel or kIgnoreLabel
  std::vector<int> matched_gt;  // -1 when no ground truth overlaps
  std::vector<double> max_iou;
};

/// Each box takes the class of its highest-IoU ground truth: foreground when
/// that IoU >= fg_iou, background below bg_iou, ignored in between. Ground
/// truth boxes are appended as guaranteed foreground when inject_gt is set.
DetectorAssignment assign_detector_labels(std::span<const Box> proposals,
                                          std::span<const GroundTruth> gt, double fg_iou = 0.5,
                                          double bg_iou = 0.3, bool inject_gt = true);

struct ClassHead {
  NystromModel classifier;
  DeltaRegressors regressors;
  bool degenerate = false;
};

struct OnlineDetectorModel {
  RegionFeatureConfig features;
  int input_channels = 0;
  double score_threshold = 0.0;
  double nms_threshold = 0.3;
  int max_detections = 100;
  std::vector<ClassHead> heads;  // one per class

  int num_classes() const { return static_cast<int>(heads.size()); }
  int feature_dim() const {
    const int side = 2 * features.context_radius + 1;
    return static_cast<int>(region_feature_dim(input_channels * side * side, features.mode, features.pool));
  }
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;
};

struct DetectorClassReport {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t negatives_from_other_classes = 0;
  std::size_t negatives_touched = 0;
  bool degenerate = false;
  std::vector<MinibootstrapTraceLine> trace;
};

struct DetectorTrainResult {
  OnlineDetectorModel model;
  std::vector<DetectorClassReport> classes;
  std::vector<std::string> warnings;
};

/// Trains from precomputed proposals (one list per image of `data`).
DetectorTrainResult train_online_detector(const ImageSource& data,
                                          std::span<const std::vector<ScoredBox>> proposals,
                                          const DetectorConfig& cfg, int n_classes);

/// Generates train_proposals proposals per image with the RPN, then trains.
DetectorTrainResult train_online_detector(const ImageSource& data, const OnlineRpnModel& rpn,
                                          const DetectorConfig& cfg, int n_classes);

/// Scores proposals with every class head; survivors above the score
/// threshold are refined, suppressed per class and sorted by score.
std::vector<Detection> detect_on_proposals(const OnlineDetectorModel& model, const FeatureMap& map,
                                           const ImageSize& image,
                                           std::span<const ScoredBox> proposals);

std::vector<Detection> detect(const OnlineDetectorModel& model, const OnlineRpnModel& rpn,
                              const FeatureMap& map, const ImageSize& image, int top_n);

std::vector<std::uint8_t> serialize(const OnlineDetectorModel& model);
OnlineDetectorModel deserialize_detector(std::span<const std::uint8_t> bytes);
void save_detector(const OnlineDetectorModel& model, const std::filesystem::path& path);
OnlineDetectorModel load_detector(const std::filesystem::path& path);

}  // namespace odet
