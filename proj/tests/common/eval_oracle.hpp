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

// Straightforward reference evaluator for proposals and detections. Shares no
// code with the library beyond the plain data types.

#include <algorithm>
#include <cstddef>
#include <random>
#include <tuple>
#include <vector>

#include "odet/detector.hpp"
#include "odet/geometry.hpp"

namespace oracle {

inline double box_iou(const odet::Box& a, const odet::Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  const double inter = w * h;
  return inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter);
}

// Walks boxes by (score desc, position asc); each claims the unclaimed gt of
// highest IoU, first such gt on equal IoU, if that IoU reaches thr. Returns
// a per-box flag.
inline std::vector<bool> greedy_claims(const std::vector<std::tuple<double, std::size_t, odet::Box>>& ranked,
                                       const std::vector<odet::Box>& gt, double thr) {
  std::vector<std::vector<double>> table(ranked.size(), std::vector<double>(gt.size()));
  for (std::size_t i = 0; i < ranked.size(); ++i)
    for (std::size_t q = 0; q < gt.size(); ++q) table[i][q] = box_iou(std::get<2>(ranked[i]), gt[q]);
  std::vector<bool> claimed(gt.size(), false), hit(ranked.size(), false);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    std::size_t pick = gt.size();
    for (std::size_t q = 0; q < gt.size(); ++q) {
      if (claimed[q] || table[i][q] < thr) continue;
      if (pick == gt.size() || table[i][q] > table[i][pick]) pick = q;
    }
    if (pick < gt.size()) {
      claimed[pick] = true;
      hit[i] = true;
    }
  }
  return hit;
}

inline std::vector<std::tuple<double, std::size_t, odet::Box>> rank(const std::vector<odet::ScoredBox>& boxes) {
  std::vector<std::tuple<double, std::size_t, odet::Box>> r;
  for (std::size_t k = 0; k < boxes.size(); ++k) r.emplace_back(boxes[k].score, k, boxes[k].box);
  std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::get<1>(a) < std::get<1>(b);
  });
  return r;
}

inline double average_recall(const std::vector<std::vector<odet::ScoredBox>>& props,
                             const std::vector<std::vector<odet::Box>>& gt,
                             const std::vector<double>& thresholds) {
  double n_gt = 0;
  for (const auto& g : gt) n_gt += static_cast<double>(g.size());
  double acc = 0.0;
  for (double t : thresholds) {
    double found = 0;
    for (std::size_t k = 0; k < gt.size(); ++k) {
      const auto hits = greedy_claims(rank(props[k]), gt[k], t);
      found += static_cast<double>(std::count(hits.begin(), hits.end(), true));
    }
    acc += found / n_gt;
  }
  return acc / static_cast<double>(thresholds.size());
}

// AP of one class. all_points integrates the monotone precision envelope one
// true positive at a time; otherwise the 11-point VOC07 rule.
inline double class_ap(const std::vector<std::vector<odet::Detection>>& dets,
                       const std::vector<std::vector<odet::GroundTruth>>& gt, int cls, double thr,
                       bool all_points) {
  std::size_t n_gt = 0;
  std::vector<std::vector<odet::Box>> boxes(gt.size());
  for (std::size_t k = 0; k < gt.size(); ++k)
    for (const auto& g : gt[k])
      if (g.class_id == cls) {
        boxes[k].push_back(g.box);
        ++n_gt;
      }
  // (score, image, position within image)
  std::vector<std::tuple<double, std::size_t, std::size_t>> order;
  for (std::size_t k = 0; k < dets.size(); ++k)
    for (std::size_t j = 0; j < dets[k].size(); ++j)
      if (dets[k][j].class_id == cls) order.emplace_back(dets[k][j].score, k, j);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  std::vector<std::vector<bool>> claimed(gt.size());
  for (std::size_t k = 0; k < gt.size(); ++k) claimed[k].assign(boxes[k].size(), false);
  std::vector<bool> tp;
  for (const auto& [s, k, j] : order) {
    const odet::Box& b = dets[k][j].box;
    std::size_t pick = boxes[k].size();
    double best = -1.0;
    for (std::size_t q = 0; q < boxes[k].size(); ++q) {
      const double v = box_iou(b, boxes[k][q]);
      if (!claimed[k][q] && v >= thr && v > best) {
        best = v;
        pick = q;
      }
    }
    if (pick < boxes[k].size()) claimed[k][pick] = true;
    tp.push_back(pick < boxes[k].size());
  }
  std::vector<double> prec, rec;
  double t = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    t += tp[i] ? 1 : 0;
    prec.push_back(t / static_cast<double>(i + 1));
    rec.push_back(t / static_cast<double>(n_gt));
  }
  auto envelope = [&](std::size_t i) {
    double p = 0.0;
    for (std::size_t r = i; r < prec.size(); ++r) p = std::max(p, prec[r]);
    return p;
  };
  if (all_points) {
    double ap = 0.0;
    for (std::size_t i = 0; i < tp.size(); ++i)
      if (tp[i]) ap += envelope(i) / static_cast<double>(n_gt);
    return ap;
  }
  double ap = 0.0;
  for (int level = 0; level <= 10; ++level) {
    double p = 0.0;
    for (std::size_t i = 0; i < rec.size(); ++i)
      if (rec[i] >= level / 10.0) p = std::max(p, prec[i]);
    ap += p;
  }
  return ap / 11.0;
}

inline double mean_ap(const std::vector<std::vector<odet::Detection>>& dets,
                      const std::vector<std::vector<odet::GroundTruth>>& gt, int n_classes, double thr,
                      bool all_points) {
  double sum = 0.0;
  int used = 0;
  for (int c = 0; c < n_classes; ++c) {
    bool any = false;
    for (const auto& g : gt)
      for (const auto& o : g) any = any || o.class_id == c;
    if (!any) continue;
    sum += class_ap(dets, gt, c, thr, all_points);
    ++used;
  }
  return sum / used;
}

// Random scene: ground truth per image, proposals and detections that are
// jittered copies of it plus clutter. Scores are coarse so ties occur.
struct Scene {
  std::vector<std::vector<odet::GroundTruth>> gt;
  std::vector<std::vector<odet::Box>> gt_boxes;
  std::vector<std::vector<odet::ScoredBox>> proposals;
  std::vector<std::vector<odet::Detection>> detections;
  int n_classes = 3;
};

inline Scene random_scene(std::uint64_t seed, int n_images = 10, int n_classes = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0.0, 200.0), len(10.0, 60.0), jit(-8.0, 8.0), u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, n_classes - 1), count(0, 5);
  Scene s;
  s.n_classes = n_classes;
  s.gt.resize(n_images);
  s.gt_boxes.resize(n_images);
  s.proposals.resize(n_images);
  s.detections.resize(n_images);
  auto rand_box = [&] {
    const double x = pos(rng), y = pos(rng);
    return odet::Box{x, y, x + len(rng), y + len(rng)};
  };
  auto jitter = [&](const odet::Box& b) {
    odet::Box j{b.x1 + jit(rng), b.y1 + jit(rng), b.x2 + jit(rng), b.y2 + jit(rng)};
    if (j.x2 <= j.x1 + 1) j.x2 = j.x1 + 1;
    if (j.y2 <= j.y1 + 1) j.y2 = j.y1 + 1;
    return j;
  };
  for (int k = 0; k < n_images; ++k) {
    const int n = count(rng);
    for (int q = 0; q < n; ++q) {
      s.gt[k].push_back({rand_box(), cls(rng)});
      s.gt_boxes[k].push_back(s.gt[k].back().box);
    }
    for (const auto& g : s.gt[k]) {
      for (int r = 0; r < 3; ++r) {
        s.proposals[k].push_back({jitter(g.box), std::round(u(rng) * 20) / 20});
        const int c = u(rng) < 0.8 ? g.class_id : cls(rng);
        s.detections[k].push_back({jitter(g.box), c, std::round(u(rng) * 20) / 20});
      }
    }
    for (int r = 0; r < 8; ++r) {
      s.proposals[k].push_back({rand_box(), std::round(u(rng) * 20) / 20});
      s.detections[k].push_back({rand_box(), cls(rng), std::round(u(rng) * 20) / 20});
    }
  }
  // At least one ground truth overall.
  if (s.gt[0].empty()) {
    s.gt[0].push_back({rand_box(), 0});
    s.gt_boxes[0].push_back(s.gt[0].back().box);
  }
  return s;
}

}  // namespace oracle
