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

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace odet {

/// Axis-aligned box in image pixels. Corners are continuous and exclusive:
/// width is x2 - x1 with no +1 term.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return x1 + 0.5 * width(); }
  double center_y() const { return y1 + 0.5 * height(); }
  bool valid() const;

  friend bool operator==(const Box&, const Box&) = default;
};

struct ImageSize {
  double width = 0.0;
  double height = 0.0;
};

/// Regression offsets of a target box relative to a reference box.
struct BoxDelta {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;

  std::array<double, 4> as_array() const { return {tx, ty, tw, th}; }
  static BoxDelta from_array(std::span<const double, 4> v) { return {v[0], v[1], v[2], v[3]}; }
};

/// Optional standardization of regression targets. Off by default.
struct DeltaNormalization {
  std::array<double, 4> mean{0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> stddev{1.0, 1.0, 1.0, 1.0};
};

/// Anchor set per feature-map cell. Anchor a = scale_index * |ratios| + ratio_index;
/// ratio is height / width and every anchor of scale s has area s^2.
struct AnchorConfig {
  std::vector<double> scales;
  std::vector<double> aspect_ratios;
  int stride = 16;

  std::size_t count() const { return scales.size() * aspect_ratios.size(); }
  void validate() const;
};

struct Anchor {
  int row = 0;     // i
  int col = 0;     // j
  int index = 0;   // a
  Box box;
};

/// Throws DomainError if either box is degenerate.
double iou(const Box& a, const Box& b);

/// Intersection area, zero when disjoint. No validity checks.
double intersection_area(const Box& a, const Box& b);

/// Anchors for every (i, j, a), ordered i outer, then j, then a. Anchor (i, j, a)
/// is centered at ((j + 0.5) * stride, (i + 0.5) * stride).
std::vector<Anchor> generate_anchors(const AnchorConfig& cfg, int map_h, int map_w);

/// Width and height of anchor index a.
std::array<double, 2> anchor_shape(const AnchorConfig& cfg, int a);

BoxDelta encode_deltas(const Box& anchor, const Box& target,
                       const std::optional<DeltaNormalization>& norm = std::nullopt);

struct DecodedBox {
  Box box;
  bool degenerate = false;
};

/// Inverse of encode_deltas. When clip_to is given the result is clipped to
/// [0, W] x [0, H]; a box that collapses to zero area is flagged degenerate.
DecodedBox decode_deltas(const Box& anchor, const BoxDelta& d,
                         const std::optional<ImageSize>& clip_to = std::nullopt,
                         const std::optional<DeltaNormalization>& norm = std::nullopt);

Box clip_box(const Box& b, const ImageSize& size);

/// Fraction of the box area that lies outside the image.
double fraction_outside(const Box& b, const ImageSize& size);

struct ScoredBox {
  Box box;
  double score = 0.0;
};

/// Greedy non-maximum suppression. Returns kept indices in descending score
/// order; equal scores keep the lower original index first. A box is
/// suppressed when its IoU with an already kept box exceeds iou_threshold.
std::vector<std::size_t> nms(std::span<const ScoredBox> boxes, double iou_threshold,
                             std::size_t max_keep);

}  // namespace odet
