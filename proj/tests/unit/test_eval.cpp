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
#include <fstream>
#include <random>

#include <doctest.h>

#include "eval_oracle.hpp"
#include "odet/error.hpp"
#include "odet/eval.hpp"
#include "test_util.hpp"

using namespace odet;

namespace {

std::vector<ClassDetection> one_image(std::initializer_list<std::pair<Box, double>> d) {
  std::vector<ClassDetection> out;
  for (const auto& [b, s] : d) out.push_back({0, b, s});
  return out;
}

}  // namespace

TEST_CASE("default AR thresholds") {
  const auto t = MatchConfig::default_thresholds();
  REQUIRE(t.size() == 10);
  CHECK(t.front() == 0.5);
  CHECK(t[2] == 0.6);
  CHECK(t.back() == 0.95);
  MatchConfig bad;
  bad.iou_thresholds = {0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.iou_thresholds = {1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("average recall examples") {
  const std::vector<std::vector<Box>> gt{{{0, 0, 10, 10}}, {{5, 5, 25, 25}, {30, 30, 40, 50}}};
  std::vector<std::vector<ScoredBox>> perfect(2);
  for (std::size_t k = 0; k < 2; ++k)
    for (const auto& b : gt[k]) perfect[k].push_back({b, 1.0});
  CHECK(average_recall(perfect, gt) == 1.0);

  // IoU exactly 0.6 counts at 0.5, 0.55 and 0.6.
  const std::vector<std::vector<Box>> one{{{0, 0, 10, 10}}};
  const std::vector<std::vector<ScoredBox>> p{{{{0, 0, 6, 10}, 0.3}}};
  CHECK(iou(p[0][0].box, one[0][0]) == 0.6);
  CHECK(average_recall(p, one) == doctest::Approx(0.3).epsilon(1e-15));

  const std::vector<std::vector<ScoredBox>> none(1);
  CHECK(average_recall(none, one) == 0.0);
  const std::vector<std::vector<Box>> empty_gt(1);
  CHECK_THROWS_AS(average_recall(none, empty_gt), DataError);
  CHECK_THROWS_AS(average_recall(perfect, one), DimensionError);
}

TEST_CASE("matching is one-to-one") {
  const std::vector<Box> gt{{0, 0, 10, 10}};
  const std::vector<ScoredBox> dup{{{0, 0, 10, 10}, 0.9}, {{0, 0, 10, 10}, 0.8}, {{1, 0, 10, 10}, 0.7}};
  CHECK(count_matches(dup, gt, 0.5) == 1);
  // The higher-scored box takes the gt it overlaps most.
  const std::vector<Box> two{{0, 0, 10, 10}, {4, 0, 14, 10}};
  const std::vector<ScoredBox> b{{{3, 0, 13, 10}, 0.9}, {{0, 0, 10, 10}, 0.8}};
  CHECK(count_matches(b, two, 0.5) == 2);
}

TEST_CASE("ar curve") {
  const auto s = oracle::random_scene(5);
  const std::vector<int> ns{1, 2, 5, 10, 50};
  const auto curve = ar_curve(s.proposals, s.gt_boxes, ns);
  REQUIRE(curve.size() == 5);
  for (std::size_t k = 1; k < curve.size(); ++k) CHECK(curve[k].ar >= curve[k - 1].ar);
  CHECK(curve.back().truncated);
  CHECK_FALSE(curve.front().truncated == curve.back().truncated);

  // One perfect proposal per gt ranked first: AR is 1 from n = max gts per image.
  std::vector<std::vector<ScoredBox>> perfect(s.gt_boxes.size());
  std::size_t most = 0;
  for (std::size_t k = 0; k < s.gt_boxes.size(); ++k) {
    for (const auto& b : s.gt_boxes[k]) perfect[k].push_back({b, 2.0});
    most = std::max(most, s.gt_boxes[k].size());
    for (const auto& p : s.proposals[k]) perfect[k].push_back(p);
  }
  const std::vector<int> full{static_cast<int>(most), 100};
  for (const auto& pt : ar_curve(perfect, s.gt_boxes, full)) CHECK(pt.ar == 1.0);
}

TEST_CASE("voc average precision examples") {
  const std::vector<std::vector<Box>> gt{{{0, 0, 10, 10}}};
  const auto perfect = one_image({{{0, 0, 10, 10}, 0.9}});
  CHECK(voc_average_precision(perfect, gt, 0.5, ApMode::kVoc07ElevenPoint).ap == 1.0);
  CHECK(voc_average_precision(perfect, gt, 0.5, ApMode::kAllPoints).ap == 1.0);

  const auto dup = one_image({{{0, 0, 10, 10}, 0.9}, {{0, 0, 9, 10}, 0.8}});
  for (auto mode : {ApMode::kVoc07ElevenPoint, ApMode::kAllPoints}) {
    const auto c = voc_average_precision(dup, gt, 0.5, mode);
    CHECK(c.precision == std::vector<double>{1.0, 0.5});
    CHECK(c.recall == std::vector<double>{1.0, 1.0});
    CHECK(c.ap == 1.0);
  }

  const auto miss = one_image({{{0, 0, 4.9, 10}, 0.9}});
  CHECK(voc_average_precision(miss, gt, 0.5, ApMode::kAllPoints).ap == 0.0);
  CHECK(voc_average_precision(miss, gt, 0.5, ApMode::kVoc07ElevenPoint).ap == 0.0);

  const std::vector<std::vector<Box>> nogt(1);
  CHECK_FALSE(voc_average_precision(perfect, nogt, 0.5, ApMode::kAllPoints).defined);
}

TEST_CASE("mean average precision examples") {
  const std::vector<std::vector<GroundTruth>> gt{{{{0, 0, 10, 10}, 0}, {{20, 20, 30, 30}, 1}}};
  const std::vector<std::vector<Detection>> dets{{{{0, 0, 10, 10}, 0, 0.9}, {{50, 50, 60, 60}, 1, 0.8}}};
  const auto m = mean_ap(dets, gt, 3);
  CHECK(m.map == 0.5);
  CHECK(m.per_class_ap[0].value() == 1.0);
  CHECK(m.per_class_ap[1].value() == 0.0);
  CHECK_FALSE(m.per_class_ap[2].has_value());
  CHECK(m.warnings.size() == 1);

  const std::vector<std::vector<GroundTruth>> single{{{{0, 0, 10, 10}, 0}}};
  const std::vector<std::vector<Detection>> sd{{{{1, 0, 10, 10}, 0, 0.9}, {{30, 0, 40, 10}, 0, 0.95}}};
  const auto sm = mean_ap(sd, single, 1, 0.5, ApMode::kAllPoints);
  std::vector<ClassDetection> cd{{0, {1, 0, 10, 10}, 0.9}, {0, {30, 0, 40, 10}, 0.95}};
  const std::vector<std::vector<Box>> sb{{{0, 0, 10, 10}}};
  CHECK(sm.map == voc_average_precision(cd, sb, 0.5, ApMode::kAllPoints).ap);
  CHECK(sm.map == 0.5);

  const std::vector<std::vector<GroundTruth>> nothing(1);
  CHECK_THROWS_AS(mean_ap(sd, nothing, 1), DataError);
}

TEST_CASE("evaluators agree with the reference implementation") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = oracle::random_scene(seed);
    CHECK(std::abs(average_recall(s.proposals, s.gt_boxes) -
                   oracle::average_recall(s.proposals, s.gt_boxes, MatchConfig::default_thresholds())) < 1e-9);
    for (bool all : {false, true}) {
      const auto m = mean_ap(s.detections, s.gt, s.n_classes, 0.5, all ? ApMode::kAllPoints : ApMode::kVoc07ElevenPoint);
      CHECK(std::abs(m.map - oracle::mean_ap(s.detections, s.gt, s.n_classes, 0.5, all)) < 1e-9);
      CHECK(m.map >= 0.0);
      CHECK(m.map <= 1.0);
    }
  }
}

TEST_CASE("metrics depend only on score order") {
  auto s = oracle::random_scene(42);
  const double ar = average_recall(s.proposals, s.gt_boxes);
  const double map = mean_ap(s.detections, s.gt, s.n_classes).map;
  for (auto& v : s.proposals)
    for (auto& p : v) p.score = std::exp(3.0 * p.score) - 7.0;
  for (auto& v : s.detections)
    for (auto& d : v) d.score = std::exp(3.0 * d.score) - 7.0;
  CHECK(average_recall(s.proposals, s.gt_boxes) == ar);
  CHECK(mean_ap(s.detections, s.gt, s.n_classes).map == map);
}

TEST_CASE("dump files") {
  TempDir dir("dumps");
  const std::vector<ScoredBox> props{{{0.1, 0.2, 10.3, 20.4}, 0.123456789012345}, {{1, 2, 3, 4}, -1e-300}};
  write_proposal_dump(dir / "p.txt", props);
  const auto back = read_proposal_dump(dir / "p.txt");
  REQUIRE(back.size() == 2);
  CHECK(back[0].box == props[0].box);
  CHECK(back[0].score == props[0].score);
  CHECK(back[1].score == props[1].score);

  const std::vector<Detection> dets{{{5, 6, 7, 8}, 3, 0.75}};
  write_detection_dump(dir / "d.txt", dets);
  const auto db = read_detection_dump(dir / "d.txt");
  REQUIRE(db.size() == 1);
  CHECK(db[0].class_id == 3);
  CHECK(db[0].box == dets[0].box);

  {
    std::ofstream bad(dir / "bad.txt");
    bad << "1 2 3\n";
  }
  CHECK_THROWS_AS(read_proposal_dump(dir / "bad.txt"), DataError);
  CHECK_THROWS_AS(read_proposal_dump(dir / "missing.txt"), DataError);
}
