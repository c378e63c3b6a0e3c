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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odet/data.hpp"
#include "odet/detector.hpp"
#include "odet/geometry.hpp"

namespace odet {

struct MatchConfig {
  /// Strictly increasing, each in (0, 1). Defaults to 0.50:0.05:0.95.
  std::vector<double> iou_thresholds = default_thresholds();

  static std::vector<double> default_thresholds();
  void validate() const;
};

/// Greedy one-to-one matching: boxes in descending score order (ties keep
/// input order), each taking its highest-IoU unmatched ground truth with
/// IoU >= threshold. Returns the number of matched ground truths.
std::size_t count_matches(std::span<const ScoredBox> boxes, std::span<const Box> gt,
                          double threshold);

/// Mean over thresholds of (matched gts / total gts) across all images.
/// Throws DataError when there is no ground truth at all.
double average_recall(std::span<const std::vector<ScoredBox>> proposals,
                      std::span<const std::vector<Box>> gt, const MatchConfig& cfg = {});

struct ArPoint {
  int n = 0;
  double ar = 0.0;
  bool truncated = false;  // some image had fewer than n proposals
};

/// AR on the top-n prefix of every image's proposal list, for each n.
std::vector<ArPoint> ar_curve(std::span<const std::vector<ScoredBox>> proposals,
                              std::span<const std::vector<Box>> gt, std::span<const int> n_values,
                              const MatchConfig& cfg = {});

enum class ApMode { kVoc07ElevenPoint, kAllPoints };

struct PRCurve {
  std::vector<double> recall;
  std::vector<double> precision;
  double ap = 0.0;
  bool defined = true;  // false when the class has no ground truth
};

struct ClassDetection {
  std::size_t image = 0;
  Box box;
  double score = 0.0;
};

/// VOC-style AP for one class. gt is indexed by image.
PRCurve voc_average_precision(std::span<const ClassDetection> detections,
                              std::span<const std::vector<Box>> gt, double iou_threshold,
                              ApMode mode);

struct MapResult {
  std::vector<std::optional<double>> per_class_ap;  // nullopt: class has no ground truth
  double map = 0.0;
  std::vector<std::string> warnings;
};

/// Unweighted mean of per-class AP over classes with at least one ground truth.
MapResult mean_ap(std::span<const std::vector<Detection>> detections,
                  std::span<const std::vector<GroundTruth>> gt, int n_classes,
                  double iou_threshold = 0.5, ApMode mode = ApMode::kVoc07ElevenPoint);

// Dump formats: one text file per image.
// proposals:  "x1 y1 x2 y2 score" per line
// detections: "class_id x1 y1 x2 y2 score" per line
void write_proposal_dump(const std::filesystem::path& path, std::span<const ScoredBox> boxes);
std::vector<ScoredBox> read_proposal_dump(const std::filesystem::path& path);
void write_detection_dump(const std::filesystem::path& path, std::span<const Detection> dets);
std::vector<Detection> read_detection_dump(const std::filesystem::path& path);

/// Reads <dir>/<image id>.txt for every image of the manifest.
std::vector<std::vector<ScoredBox>> read_proposal_dir(const std::filesystem::path& dir,
                                                      const DatasetManifest& manifest);
std::vector<std::vector<Detection>> read_detection_dir(const std::filesystem::path& dir,
                                                       const DatasetManifest& manifest);

std::vector<std::vector<Box>> gt_boxes(const DatasetManifest& manifest);
std::vector<std::vector<GroundTruth>> gt_objects(const DatasetManifest& manifest);

}  // namespace odet
