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

#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "odet/error.hpp"
#include "odet/geometry.hpp"

using namespace odet;

namespace {

Box random_box(std::mt19937_64& rng, double extent = 100.0) {
  std::uniform_real_distribution<double> pos(0.0, extent);
  std::uniform_real_distribution<double> len(1.0, extent / 2);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + len(rng), y + len(rng)};
}

// Greedy suppression written against the textbook loop: pick the best
// remaining box, drop everything overlapping it, repeat.
std::vector<std::size_t> nms_oracle(const std::vector<ScoredBox>& boxes, double thr) {
  std::vector<bool> alive(boxes.size(), true);
  std::vector<std::size_t> keep;
  for (;;) {
    int best = -1;
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      if (alive[k] && (best < 0 || boxes[k].score > boxes[best].score)) best = static_cast<int>(k);
    }
    if (best < 0) break;
    keep.push_back(best);
    alive[best] = false;
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      if (!alive[k]) continue;
      const Box& a = boxes[best].box;
      const Box& b = boxes[k].box;
      const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
      const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
      const double inter = iw * ih;
      if (inter / (a.area() + b.area() - inter) > thr) alive[k] = false;
    }
  }
  return keep;
}

}  // namespace

TEST_CASE("iou basics") {
  const Box b{0, 0, 10, 10};
  CHECK(iou(b, b) == 1.0);
  CHECK(iou(b, Box{20, 20, 30, 30}) == 0.0);
  CHECK(iou(b, Box{5, 5, 15, 15}) == doctest::Approx(25.0 / 175.0).epsilon(1e-15));
  CHECK(iou(b, Box{10, 0, 20, 10}) == 0.0);  // touching edges do not overlap
  CHECK_THROWS_AS(iou(b, Box{3, 3, 3, 8}), DomainError);
}

TEST_CASE("iou is symmetric and bounded") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 2000; ++t) {
    const Box a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("anchor generation") {
  AnchorConfig cfg{{16.0}, {1.0}, 16};
  const auto anchors = generate_anchors(cfg, 2, 2);
  REQUIRE(anchors.size() == 4);
  CHECK(anchors[0].box == Box{0, 0, 16, 16});
  CHECK(anchors[0].box.center_x() == 8.0);
  CHECK(anchors[3].row == 1);
  CHECK(anchors[3].col == 1);
  CHECK(anchors[3].box.center_y() == 24.0);

  AnchorConfig six{{16.0, 32.0}, {0.5, 1.0, 2.0}, 16};
  const auto one = generate_anchors(six, 1, 1);
  REQUIRE(one.size() == 6);
  for (int a = 0; a < 6; ++a) {
    const double s = six.scales[a / 3];
    const double r = six.aspect_ratios[a % 3];
    CHECK(one[a].index == a);
    CHECK(one[a].box.area() == doctest::Approx(s * s));
    CHECK(one[a].box.height() / one[a].box.width() == doctest::Approx(r));
    CHECK(one[a].box.center_x() == doctest::Approx(8.0));
  }
  // Large anchors poke outside a small map; nothing is dropped.
  AnchorConfig big{{256.0}, {1.0}, 16};
  CHECK(generate_anchors(big, 3, 5).size() == 15);
  CHECK(generate_anchors(big, 3, 5)[0].box.x1 < 0.0);

  CHECK_THROWS_AS(generate_anchors(AnchorConfig{{}, {1.0}, 16}, 2, 2), ConfigError);
  CHECK_THROWS_AS(generate_anchors(AnchorConfig{{16.0}, {-1.0}, 16}, 2, 2), ConfigError);
}

TEST_CASE("encode examples") {
  const Box a{0, 0, 10, 10};
  auto d = encode_deltas(a, a);
  CHECK(d.tx == 0.0);
  CHECK(d.tw == 0.0);
  d = encode_deltas(a, Box{5, 0, 15, 10});
  CHECK(d.tx == doctest::Approx(0.5));
  CHECK(d.ty == 0.0);
  CHECK(d.tw == 0.0);
  CHECK(d.th == 0.0);
  d = encode_deltas(a, Box{-5, -5, 15, 15});
  CHECK(d.tx == 0.0);
  CHECK(d.ty == 0.0);
  CHECK(d.tw == doctest::Approx(std::log(2.0)));
  CHECK(d.th == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(encode_deltas(a, Box{1, 1, 1, 2}), DomainError);
}

TEST_CASE("decode and clipping") {
  const Box a{0, 0, 10, 10};
  CHECK(decode_deltas(a, {}).box == a);
  const auto wide = decode_deltas(a, {1.0, 0.0, 0.0, 0.0}, ImageSize{12.0, 12.0});
  CHECK(wide.box.x2 == 12.0);
  CHECK(wide.box.x1 == 10.0);
  CHECK_FALSE(wide.degenerate);
  const auto gone = decode_deltas(a, {5.0, 0.0, 0.0, 0.0}, ImageSize{12.0, 12.0});
  CHECK(gone.degenerate);
}

TEST_CASE("encode/decode roundtrip") {
  std::mt19937_64 rng(11);
  DeltaNormalization norm{{0.1, -0.1, 0.0, 0.2}, {0.1, 0.1, 0.2, 0.2}};
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const Box a = random_box(rng), g = random_box(rng);
    for (const auto& n : {std::optional<DeltaNormalization>{}, std::optional<DeltaNormalization>{norm}}) {
      const Box back = decode_deltas(a, encode_deltas(a, g, n), std::nullopt, n).box;
      worst = std::max({worst, std::abs(back.x1 - g.x1), std::abs(back.y1 - g.y1),
                        std::abs(back.x2 - g.x2), std::abs(back.y2 - g.y2)});
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("nms examples") {
  std::vector<ScoredBox> same{{{0, 0, 10, 10}, 0.8}, {{0, 0, 10, 10}, 0.9}};
  CHECK(nms(same, 0.5, 10) == std::vector<std::size_t>{1});

  std::vector<ScoredBox> apart{{{0, 0, 1, 1}, 0.1}, {{5, 5, 6, 6}, 0.2}, {{9, 9, 10, 10}, 0.3}};
  CHECK(nms(apart, 0.0, 10) == std::vector<std::size_t>{2, 1, 0});

  // Width 10, shift 2.5: neighbours overlap at 7.5 / 12.5 = 0.6.
  std::vector<ScoredBox> line;
  for (int k = 0; k < 5; ++k) line.push_back({{2.5 * k, 0, 2.5 * k + 10, 10}, 1.0 - 0.1 * k});
  CHECK(iou(line[0].box, line[1].box) == doctest::Approx(0.6));
  CHECK(nms(line, 0.5, 10) == std::vector<std::size_t>{0, 2, 4});
  CHECK(nms(line, 0.5, 2) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("nms ties keep the lower index") {
  std::vector<ScoredBox> tie{{{0, 0, 10, 10}, 0.5}, {{1, 0, 11, 10}, 0.5}, {{5, 0, 15, 10}, 0.5}};
  CHECK(nms(tie, 0.5, 10) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("nms agrees with the textbook loop") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> sc(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<ScoredBox> boxes;
    for (int k = 0; k < 40; ++k) boxes.push_back({random_box(rng, 60.0), sc(rng)});
    for (double thr : {0.3, 0.5, 0.7}) CHECK(nms(boxes, thr, boxes.size()) == nms_oracle(boxes, thr));
  }
}

TEST_CASE("fraction outside") {
  CHECK(fraction_outside(Box{0, 0, 10, 10}, {20, 20}) == 0.0);
  CHECK(fraction_outside(Box{-10, 0, 10, 10}, {20, 20}) == doctest::Approx(0.5));
  CHECK(fraction_outside(Box{30, 30, 40, 40}, {20, 20}) == 1.0);
}
