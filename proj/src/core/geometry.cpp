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

#include "odet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "odet/error.hpp"

namespace odet {

namespace {

// exp() overflow guard for decoded sizes; far beyond any real log-ratio.
constexpr double kMaxLogRatio = 20.0;

}  // namespace

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x2 > x1 && y2 > y1;
}

void AnchorConfig::validate() const {
  if (scales.empty() || aspect_ratios.empty()) {
    throw ConfigError("anchor config needs at least one scale and one aspect ratio");
  }
  for (double s : scales) {
    if (!(s > 0.0)) throw ConfigError("anchor scales must be strictly positive");
  }
  for (double r : aspect_ratios) {
    if (!(r > 0.0)) throw ConfigError("anchor aspect ratios must be strictly positive");
  }
  if (stride <= 0) throw ConfigError("anchor stride must be positive");
}

double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw DomainError("iou of a degenerate box");
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

std::array<double, 2> anchor_shape(const AnchorConfig& cfg, int a) {
  const auto nr = cfg.aspect_ratios.size();
  const double s = cfg.scales.at(static_cast<std::size_t>(a) / nr);
  const double r = cfg.aspect_ratios.at(static_cast<std::size_t>(a) % nr);
  const double sr = std::sqrt(r);
  return {s / sr, s * sr};
}

std::vector<Anchor> generate_anchors(const AnchorConfig& cfg, int map_h, int map_w) {
  cfg.validate();
  if (map_h < 1 || map_w < 1) throw ConfigError("feature map dimensions must be >= 1");
  const int n_anchors = static_cast<int>(cfg.count());
  std::vector<std::array<double, 2>> shapes;
  shapes.reserve(n_anchors);
  for (int a = 0; a < n_anchors; ++a) shapes.push_back(anchor_shape(cfg, a));

  std::vector<Anchor> out;
  out.reserve(static_cast<std::size_t>(map_h) * map_w * n_anchors);
  for (int i = 0; i < map_h; ++i) {
    const double cy = (i + 0.5) * cfg.stride;
    for (int j = 0; j < map_w; ++j) {
      const double cx = (j + 0.5) * cfg.stride;
      for (int a = 0; a < n_anchors; ++a) {
        const auto [w, h] = shapes[a];
        out.push_back({i, j, a, Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h}});
      }
    }
  }
  return out;
}

BoxDelta encode_deltas(const Box& anchor, const Box& target,
                       const std::optional<DeltaNormalization>& norm) {
  if (!anchor.valid() || !target.valid()) throw DomainError("encode_deltas of a degenerate box");
  const double wa = anchor.width();
  const double ha = anchor.height();
  BoxDelta d{(target.center_x() - anchor.center_x()) / wa,
             (target.center_y() - anchor.center_y()) / ha,
             std::log(target.width() / wa), std::log(target.height() / ha)};
  if (norm) {
    auto v = d.as_array();
    for (int k = 0; k < 4; ++k) v[k] = (v[k] - norm->mean[k]) / norm->stddev[k];
    d = BoxDelta::from_array(v);
  }
  return d;
}

DecodedBox decode_deltas(const Box& anchor, const BoxDelta& delta,
                         const std::optional<ImageSize>& clip_to,
                         const std::optional<DeltaNormalization>& norm) {
  if (!anchor.valid()) throw DomainError("decode_deltas with a degenerate anchor");
  auto v = delta.as_array();
  if (norm) {
    for (int k = 0; k < 4; ++k) v[k] = v[k] * norm->stddev[k] + norm->mean[k];
  }
  const double wa = anchor.width();
  const double ha = anchor.height();
  const double cx = anchor.center_x() + v[0] * wa;
  const double cy = anchor.center_y() + v[1] * ha;
  const double w = wa * std::exp(std::clamp(v[2], -kMaxLogRatio, kMaxLogRatio));
  const double h = ha * std::exp(std::clamp(v[3], -kMaxLogRatio, kMaxLogRatio));
  DecodedBox out;
  out.box = Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  if (clip_to) out.box = clip_box(out.box, *clip_to);
  out.degenerate = !out.box.valid();
  return out;
}

Box clip_box(const Box& b, const ImageSize& size) {
  return Box{std::clamp(b.x1, 0.0, size.width), std::clamp(b.y1, 0.0, size.height),
             std::clamp(b.x2, 0.0, size.width), std::clamp(b.y2, 0.0, size.height)};
}

double fraction_outside(const Box& b, const ImageSize& size) {
  const double area = b.area();
  if (area <= 0.0) return 1.0;
  const double inside = intersection_area(b, Box{0.0, 0.0, size.width, size.height});
  return 1.0 - inside / area;
}

std::vector<std::size_t> nms(std::span<const ScoredBox> boxes, double iou_threshold,
                             std::size_t max_keep) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes[a].score > boxes[b].score;
  });

  std::vector<std::size_t> keep;
  std::vector<char> suppressed(boxes.size(), 0);
  for (std::size_t oi = 0; oi < order.size() && keep.size() < max_keep; ++oi) {
    const std::size_t idx = order[oi];
    if (suppressed[idx]) continue;
    keep.push_back(idx);
    const Box& kept = boxes[idx].box;
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t other = order[oj];
      if (!suppressed[other] && iou(kept, boxes[other].box) > iou_threshold) {
        suppressed[other] = 1;
      }
    }
  }
  return keep;
}

}  // namespace odet
