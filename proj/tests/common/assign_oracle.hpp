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

#include <algorithm>
#include <vector>

#include "odet/geometry.hpp"
#include "odet/rpn.hpp"

namespace oracle {

inline double plain_iou(const odet::Box& a, const odet::Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (w > 0 && h > 0) ? w * h : 0.0;
  return inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter);
}

// Full IoU table, then the rules one after another.
inline std::vector<odet::AnchorLabel> brute_force_labels(const std::vector<odet::Anchor>& anchors,
                                                         const std::vector<odet::Box>& gt,
                                                         const odet::ImageSize& img,
                                                         const odet::AssignmentConfig& cfg) {
  using odet::AnchorLabel;
  const std::size_t n = anchors.size(), g = gt.size();
  std::vector<std::vector<double>> t(n, std::vector<double>(g, 0.0));
  std::vector<bool> ok(n);
  for (std::size_t k = 0; k < n; ++k) {
    const odet::Box& b = anchors[k].box;
    const double ix = std::max(0.0, std::min(b.x2, img.width) - std::max(b.x1, 0.0));
    const double iy = std::max(0.0, std::min(b.y2, img.height) - std::max(b.y1, 0.0));
    ok[k] = 1.0 - ix * iy / b.area() <= cfg.boundary_fraction;
    for (std::size_t q = 0; q < g; ++q) t[k][q] = plain_iou(b, gt[q]);
  }
  std::vector<AnchorLabel> out(n, AnchorLabel::kIgnore);
  for (std::size_t k = 0; k < n; ++k) {
    if (!ok[k]) continue;
    double m = 0.0;
    for (std::size_t q = 0; q < g; ++q) m = std::max(m, t[k][q]);
    if (g == 0 || m < cfg.negative_iou) out[k] = AnchorLabel::kNegative;
    if (g > 0 && m > cfg.positive_iou) out[k] = AnchorLabel::kPositive;
  }
  for (std::size_t q = 0; q < g; ++q) {
    double best = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (ok[k]) best = std::max(best, t[k][q]);
    for (std::size_t k = 0; k < n; ++k)
      if (ok[k] && best > 0.0 && t[k][q] == best) out[k] = AnchorLabel::kPositive;
  }
  return out;
}

}  // namespace oracle
