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
#include "odet/geometry.hpp"
#include "odet/kernel.hpp"
#include "odet/minibootstrap.hpp"

namespace odet {

enum class AnchorLabel : std::int8_t { kNegative = 0, kPositive = 1, kIgnore = 2 };

struct AssignmentConfig {
  double positive_iou = 0.7;   // strictly greater is positive
  double negative_iou = 0.3;   // strictly smaller is negative
  /// Anchors with more than this fraction of their area outside the image
  /// are ignored for training (and excluded from the argmax fallback).
  double boundary_fraction = 0.3;
};

struct AnchorAssignment {
  std::vector<AnchorLabel> labels;
  std::vector<int> matched_gt;   // -1 when no ground truth overlaps
  std::vector<double> max_iou;

  std::size_t count(AnchorLabel l) const;
};

/// Labels anchors against ground truth: IoU > positive_iou is positive,
/// IoU < negative_iou negative, in between ignored. Every ground truth also
/// makes its highest-IoU anchors positive (all ties), provided that IoU is > 0.
AnchorAssignment assign_anchor_labels(std::span<const Anchor> anchors, std::span<const Box> gt,
                                      const ImageSize& image, const AssignmentConfig& cfg = {});

struct ProposalParams {
  int pre_nms_top_k = 2000;
  double nms_threshold = 0.7;
  int post_nms_top_n = 300;
};

struct RpnConfig {
  AnchorConfig anchors{{32.0, 64.0}, {0.5, 1.0, 2.0}, 16};
  AssignmentConfig assignment;
  MinibootstrapConfig minibootstrap;
  KernelHyperParams kernel;
  double ridge_lambda = 0.0;  // 0 uses kernel.lambda
  /// Neighbourhood stacked into each cell sample (stand-in for the frozen
  /// intermediate RPN convolution); 0 unrolls the raw map.
  int context_radius = 0;
  ProposalParams proposals;
  std::uint64_t seed = 0;
  int workers = 0;

  void validate() const;
};

struct AnchorHead {
  NystromModel classifier;
  DeltaRegressors regressors;
  bool degenerate = false;  // no positives: always-negative score, identity refinement
};

struct OnlineRpnModel {
  AnchorConfig anchors;
  int context_radius = 0;
  int input_channels = 0;  // f of the raw feature map
  ProposalParams proposals;
  std::vector<AnchorHead> heads;  // one per anchor index

  int sample_dim() const {
    const int side = 2 * context_radius + 1;
    return input_channels * side * side;
  }
};

struct RpnAnchorReport {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t negatives_touched = 0;
  bool degenerate = false;
  std::vector<MinibootstrapTraceLine> trace;
};

struct RpnTrainResult {
  OnlineRpnModel model;
  std::vector<RpnAnchorReport> anchors;
  std::vector<std::string> warnings;
};

/// Per anchor index a: positives are the cell samples whose (i, j, a) anchor
/// is labeled positive across all images, negatives the negative ones. The
/// classifier is trained with Minibootstrap; four ridge regressors learn
/// encode_deltas(anchor, matched gt) on the positives.
RpnTrainResult train_online_rpn(const ImageSource& data, const RpnConfig& cfg);

/// Scores every (cell, anchor), refines each anchor box with its regressors,
/// clips to the image, keeps the pre-NMS top K and returns at most top_n boxes
/// after NMS in descending score order.
std::vector<ScoredBox> propose_regions(const OnlineRpnModel& model, const FeatureMap& map,
                                       const ImageSize& image, int top_n);

std::vector<std::uint8_t> serialize(const OnlineRpnModel& model);
OnlineRpnModel deserialize_rpn(std::span<const std::uint8_t> bytes);
void save_rpn(const OnlineRpnModel& model, const std::filesystem::path& path);
OnlineRpnModel load_rpn(const std::filesystem::path& path);

}  // namespace odet
