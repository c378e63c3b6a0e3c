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

#include "odet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "odet/error.hpp"

namespace odet {

namespace fs = std::filesystem;

std::vector<double> MatchConfig::default_thresholds() {
  std::vector<double> t;
  // Rounded so that 0.6 is the literal 0.6 and ties at a threshold match.
  for (int k = 0; k < 10; ++k) t.push_back(std::round((0.5 + 0.05 * k) * 100.0) / 100.0);
  return t;
}

void MatchConfig::validate() const {
  if (iou_thresholds.empty()) throw ConfigError("at least one IoU threshold is required");
  for (std::size_t k = 0; k < iou_thresholds.size(); ++k) {
    const double t = iou_thresholds[k];
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("IoU thresholds must lie in (0, 1)");
    if (k > 0 && !(t > iou_thresholds[k - 1])) {
      throw ConfigError("IoU thresholds must be strictly increasing");
    }
  }
}

std::size_t count_matches(std::span<const ScoredBox> boxes, std::span<const Box> gt,
                          double threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes[a].score > boxes[b].score;
  });
  std::vector<char> taken(gt.size(), 0);
  std::size_t matched = 0;
  for (std::size_t idx : order) {
    if (matched == gt.size()) break;
    if (!boxes[idx].box.valid()) continue;
    int best = -1;
    double best_iou = threshold;
    for (std::size_t q = 0; q < gt.size(); ++q) {
      if (taken[q]) continue;
      const double v = iou(boxes[idx].box, gt[q]);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(q);
        best_iou = v;
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = 1;
      ++matched;
    }
  }
  return matched;
}

double average_recall(std::span<const std::vector<ScoredBox>> proposals,
                      std::span<const std::vector<Box>> gt, const MatchConfig& cfg) {
  cfg.validate();
  if (proposals.size() != gt.size()) {
    throw DimensionError("average_recall: proposal and ground-truth image counts differ");
  }
  std::size_t total = 0;
  for (const auto& g : gt) total += g.size();
  if (total == 0) throw DataError("average recall is undefined without ground truth");

  double sum = 0.0;
  for (double t : cfg.iou_thresholds) {
    std::size_t matched = 0;
    for (std::size_t k = 0; k < gt.size(); ++k) matched += count_matches(proposals[k], gt[k], t);
    sum += static_cast<double>(matched) / static_cast<double>(total);
  }
  return sum / static_cast<double>(cfg.iou_thresholds.size());
}

std::vector<ArPoint> ar_curve(std::span<const std::vector<ScoredBox>> proposals,
                              std::span<const std::vector<Box>> gt, std::span<const int> n_values,
                              const MatchConfig& cfg) {
  std::vector<ArPoint> out;
  for (int n : n_values) {
    if (n < 0) throw ConfigError("ar_curve proposal counts must be >= 0");
    ArPoint pt;
    pt.n = n;
    std::vector<std::vector<ScoredBox>> prefix(proposals.size());
    for (std::size_t k = 0; k < proposals.size(); ++k) {
      // Top-n by score, ties in input order.
      std::vector<std::size_t> order(proposals[k].size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return proposals[k][a].score > proposals[k][b].score;
      });
      if (order.size() < static_cast<std::size_t>(n)) pt.truncated = true;
      const std::size_t take = std::min(order.size(), static_cast<std::size_t>(n));
      for (std::size_t q = 0; q < take; ++q) prefix[k].push_back(proposals[k][order[q]]);
    }
    pt.ar = average_recall(prefix, gt, cfg);
    out.push_back(pt);
  }
  return out;
}

PRCurve voc_average_precision(std::span<const ClassDetection> detections,
                              std::span<const std::vector<Box>> gt, double iou_threshold,
                              ApMode mode) {
  PRCurve curve;
  std::size_t n_gt = 0;
  for (const auto& g : gt) n_gt += g.size();
  if (n_gt == 0) {
    curve.defined = false;
    curve.ap = std::numeric_limits<double>::quiet_NaN();
    return curve;
  }

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  std::vector<std::vector<char>> taken(gt.size());
  for (std::size_t k = 0; k < gt.size(); ++k) taken[k].assign(gt[k].size(), 0);
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t idx : order) {
    const auto& d = detections[idx];
    if (d.image >= gt.size()) throw DimensionError("detection refers to an unknown image");
    const auto& g = gt[d.image];
    int best = -1;
    double best_iou = iou_threshold;
    if (d.box.valid()) {
      for (std::size_t q = 0; q < g.size(); ++q) {
        if (taken[d.image][q]) continue;
        const double v = iou(d.box, g[q]);
        if (v >= best_iou && (best < 0 || v > best_iou)) {
          best = static_cast<int>(q);
          best_iou = v;
        }
      }
    }
    if (best >= 0) {
      taken[d.image][static_cast<std::size_t>(best)] = 1;
      ++tp;
    } else {
      ++fp;
    }
    curve.recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    curve.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }

  if (mode == ApMode::kVoc07ElevenPoint) {
    double sum = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double t = k / 10.0;
      double p = 0.0;
      for (std::size_t i = 0; i < curve.recall.size(); ++i) {
        if (curve.recall[i] >= t) p = std::max(p, curve.precision[i]);
      }
      sum += p;
    }
    curve.ap = sum / 11.0;
  } else {
    std::vector<double> mrec{0.0};
    std::vector<double> mpre{0.0};
    mrec.insert(mrec.end(), curve.recall.begin(), curve.recall.end());
    mpre.insert(mpre.end(), curve.precision.begin(), curve.precision.end());
    mrec.push_back(1.0);
    mpre.push_back(0.0);
    for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
    double ap = 0.0;
    for (std::size_t i = 1; i < mrec.size(); ++i) {
      if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
    }
    curve.ap = ap;
  }
  return curve;
}

MapResult mean_ap(std::span<const std::vector<Detection>> detections,
                  std::span<const std::vector<GroundTruth>> gt, int n_classes, double iou_threshold,
                  ApMode mode) {
  if (detections.size() != gt.size()) {
    throw DimensionError("mean_ap: detection and ground-truth image counts differ");
  }
  if (n_classes < 1) throw ConfigError("mean_ap needs at least one class");
  MapResult result;
  result.per_class_ap.assign(static_cast<std::size_t>(n_classes), std::nullopt);
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < n_classes; ++c) {
    std::vector<ClassDetection> dets;
    std::vector<std::vector<Box>> boxes(gt.size());
    for (std::size_t k = 0; k < gt.size(); ++k) {
      for (const auto& d : detections[k]) {
        if (d.class_id == c) dets.push_back({k, d.box, d.score});
      }
      for (const auto& g : gt[k]) {
        if (g.class_id == c) boxes[k].push_back(g.box);
      }
    }
    const auto curve = voc_average_precision(dets, boxes, iou_threshold, mode);
    if (!curve.defined) {
      result.warnings.push_back("class " + std::to_string(c) + " has no ground truth; excluded from mAP");
      continue;
    }
    result.per_class_ap[static_cast<std::size_t>(c)] = curve.ap;
    sum += curve.ap;
    ++defined;
  }
  if (defined == 0) throw DataError("mAP is undefined: no class has ground truth");
  result.map = sum / defined;
  return result;
}

// ---------------------------------------------------------------- dumps

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::vector<double>> read_rows(const fs::path& path, std::size_t width) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dump " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (!ss.eof() || row.size() != width) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(width) + " numbers");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_proposal_dump(const fs::path& path, std::span<const ScoredBox> boxes) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& b : boxes) {
    out << fmt_double(b.box.x1) << ' ' << fmt_double(b.box.y1) << ' ' << fmt_double(b.box.x2) << ' '
        << fmt_double(b.box.y2) << ' ' << fmt_double(b.score) << '\n';
  }
}

std::vector<ScoredBox> read_proposal_dump(const fs::path& path) {
  std::vector<ScoredBox> out;
  for (const auto& r : read_rows(path, 5)) out.push_back({Box{r[0], r[1], r[2], r[3]}, r[4]});
  return out;
}

void write_detection_dump(const fs::path& path, std::span<const Detection> dets) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& d : dets) {
    out << d.class_id << ' ' << fmt_double(d.box.x1) << ' ' << fmt_double(d.box.y1) << ' '
        << fmt_double(d.box.x2) << ' ' << fmt_double(d.box.y2) << ' ' << fmt_double(d.score) << '\n';
  }
}

std::vector<Detection> read_detection_dump(const fs::path& path) {
  std::vector<Detection> out;
  for (const auto& r : read_rows(path, 6)) {
    if (r[0] != std::floor(r[0]) || r[0] < 0) {
      throw DataError(path.string() + ": class_id must be a non-negative integer");
    }
    out.push_back({Box{r[1], r[2], r[3], r[4]}, static_cast<int>(r[0]), r[5]});
  }
  return out;
}

std::vector<std::vector<ScoredBox>> read_proposal_dir(const fs::path& dir,
                                                      const DatasetManifest& manifest) {
  std::vector<std::vector<ScoredBox>> out;
  for (const auto& rec : manifest.images) out.push_back(read_proposal_dump(dir / (rec.id + ".txt")));
  return out;
}

std::vector<std::vector<Detection>> read_detection_dir(const fs::path& dir,
                                                       const DatasetManifest& manifest) {
  std::vector<std::vector<Detection>> out;
  for (const auto& rec : manifest.images) out.push_back(read_detection_dump(dir / (rec.id + ".txt")));
  return out;
}

std::vector<std::vector<Box>> gt_boxes(const DatasetManifest& manifest) {
  std::vector<std::vector<Box>> out;
  for (const auto& rec : manifest.images) {
    std::vector<Box> b;
    for (const auto& o : rec.objects) b.push_back(o.box);
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<std::vector<GroundTruth>> gt_objects(const DatasetManifest& manifest) {
  std::vector<std::vector<GroundTruth>> out;
  for (const auto& rec : manifest.images) out.push_back(rec.objects);
  return out;
}

}  // namespace odet
