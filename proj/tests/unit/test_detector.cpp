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

#include <algorithm>
#include <random>

#include <doctest.h>

#include "odet/data.hpp"
#include "odet/detector.hpp"
#include "odet/error.hpp"

using namespace odet;

namespace {

SynthConfig synth(int n, std::uint64_t seed) {
  SynthConfig s;
  s.n_images = n;
  s.map_h = 12;
  s.map_w = 12;
  s.seed = seed;
  return s;
}

// Jittered copies of every ground truth plus random boxes.
std::vector<std::vector<ScoredBox>> sampled_proposals(const ImageSource& ds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jit(-6.0, 6.0);
  std::vector<std::vector<ScoredBox>> out(ds.size());
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const auto& rec = ds.record(k);
    std::uniform_real_distribution<double> px(0.0, rec.size.width - 40), py(0.0, rec.size.height - 40);
    std::uniform_real_distribution<double> len(16.0, 80.0);
    for (const auto& o : rec.objects)
      for (int r = 0; r < 4; ++r) {
        Box b{o.box.x1 + jit(rng), o.box.y1 + jit(rng), o.box.x2 + jit(rng), o.box.y2 + jit(rng)};
        out[k].push_back({clip_box(b, rec.size), 1.0});
      }
    for (int r = 0; r < 30; ++r) {
      const double x = px(rng), y = py(rng);
      out[k].push_back({clip_box(Box{x, y, x + len(rng), y + len(rng)}, rec.size), 0.0});
    }
  }
  return out;
}

DetectorConfig small_detector() {
  DetectorConfig c;
  c.features.pool = 3;
  c.features.context_radius = 1;
  c.minibootstrap.n_batches = 2;
  c.minibootstrap.batch_size = 500;
  c.kernel.sigma = 4.0;
  c.kernel.lambda = 1e-3;
  c.kernel.m_centers = 300;
  c.ridge_lambda = 10.0;
  c.seed = 3;
  c.workers = 1;
  return c;
}

RpnConfig small_rpn() {
  RpnConfig c;
  c.anchors = AnchorConfig{{48.0, 64.0, 80.0}, {1.0}, 16};
  c.minibootstrap.n_batches = 2;
  c.minibootstrap.batch_size = 300;
  c.kernel.sigma = 2.0;
  c.kernel.m_centers = 300;
  c.ridge_lambda = 1.0;
  c.context_radius = 2;
  c.seed = 5;
  c.workers = 1;
  return c;
}

struct Trained {
  InMemoryDataset data;
  std::vector<std::vector<ScoredBox>> proposals;
  DetectorTrainResult det;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained r;
    r.data = generate_synthetic(synth(40, 21));
    r.proposals = sampled_proposals(r.data, 8);
    r.det = train_online_detector(r.data, r.proposals, small_detector(), 5);
    return r;
  }();
  return t;
}

}  // namespace

TEST_CASE("detector assignment examples") {
  const std::vector<GroundTruth> gt{{{0, 0, 6, 10}, 1}, {{4.5, 0, 10, 10}, 2}};
  const std::vector<Box> props{{0, 0, 10, 10}, {0, 0, 6, 10}, {40, 40, 50, 50}, {0, 0, 3, 10}};
  const auto a = assign_detector_labels(props, gt);
  REQUIRE(a.boxes.size() == 6);
  CHECK(a.max_iou[0] == doctest::Approx(0.6));
  CHECK(a.labels[0] == 1);
  CHECK(a.matched_gt[0] == 0);
  CHECK(a.labels[1] == 1);
  CHECK(a.labels[2] == kBackgroundLabel);
  CHECK(a.matched_gt[2] == -1);
  CHECK(a.max_iou[3] == doctest::Approx(0.5));
  CHECK(a.labels[3] == 1);
  // Injected ground truth comes last, labelled with its own class.
  CHECK(a.boxes[4] == gt[0].box);
  CHECK(a.labels[4] == 1);
  CHECK(a.labels[5] == 2);

  const std::vector<Box> low{{0, 0, 2, 10}};
  const auto b = assign_detector_labels(low, gt, 0.5, 0.3, false);
  REQUIRE(b.boxes.size() == 1);
  CHECK(b.max_iou[0] == doctest::Approx(1.0 / 3.0));
  CHECK(b.labels[0] == kIgnoreLabel);

  const std::vector<Box> far{{20, 0, 30, 10}};
  CHECK(assign_detector_labels(far, gt, 0.5, 0.3, false).labels[0] == kBackgroundLabel);
}

TEST_CASE("detector assignment matches an argmax scan") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 60.0), l(4.0, 30.0);
  for (int scene = 0; scene < 50; ++scene) {
    std::vector<GroundTruth> gt;
    for (int q = 0; q < 1 + scene % 4; ++q) {
      const double x = u(rng), y = u(rng);
      gt.push_back({{x, y, x + l(rng), y + l(rng)}, q % 3});
    }
    std::vector<Box> props;
    for (int p = 0; p < 20; ++p) {
      const double x = u(rng), y = u(rng);
      props.push_back({x, y, x + l(rng), y + l(rng)});
    }
    const auto a = assign_detector_labels(props, gt, 0.5, 0.3, false);
    for (std::size_t p = 0; p < props.size(); ++p) {
      double best = 0.0;
      int arg = -1;
      for (std::size_t q = 0; q < gt.size(); ++q) {
        const double v = iou(props[p], gt[q].box);
        if (v > best) best = v, arg = static_cast<int>(q);
      }
      const int want = best >= 0.5 ? gt[arg].class_id : (best < 0.3 ? kBackgroundLabel : kIgnoreLabel);
      CHECK(a.labels[p] == want);
    }
  }
}

TEST_CASE("detector training on planted signatures") {
  const auto& t = trained();
  const auto& det = t.det;
  const auto cfg = small_detector();
  REQUIRE(det.model.num_classes() == 5);
  CHECK(det.warnings.empty());
  std::vector<std::size_t> hit(5, 0), total(5, 0);
  for (std::size_t k = 0; k < t.data.size(); ++k) {
    const auto& rec = t.data.record(k);
    const FeatureMap stacked = stack_neighbourhood(*t.data.feature_map(k), cfg.features.context_radius);
    std::vector<Box> boxes;
    for (const auto& p : t.proposals[k]) boxes.push_back(p.box);
    const auto a = assign_detector_labels(boxes, rec.objects);
    for (std::size_t b = 0; b < a.boxes.size(); ++b) {
      if (a.labels[b] == kIgnoreLabel) continue;
      const auto f = region_feature(stacked, a.boxes[b], cfg.features.mode, cfg.features.pool,
                                    cfg.features.samples_per_bin);
      for (int c = 0; c < 5; ++c) {
        const double s = det.model.heads[c].classifier.score(f.values);
        ++total[c];
        hit[c] += (s > 0) == (a.labels[b] == c);
      }
    }
  }
  for (int c = 0; c < 5; ++c) {
    CAPTURE(c);
    CHECK(static_cast<double>(hit[c]) / total[c] >= 0.95);
    CHECK(det.classes[c].negatives_touched <= 1000);
  }
}

TEST_CASE("other classes' foreground is negative") {
  DatasetManifest m;
  m.classes = {"a", "b"};
  ImageRecord rec;
  rec.id = "toy";
  rec.size = {128, 128};
  rec.objects = {{{16, 16, 48, 48}, 0}, {{80, 80, 112, 112}, 1}};
  m.images.push_back(rec);
  FeatureMap map(8, 8, 4, 16);
  for (int i = 1; i < 3; ++i)
    for (int j = 1; j < 3; ++j) map.at(i, j, 0) = 1.0f;
  for (int i = 5; i < 7; ++i)
    for (int j = 5; j < 7; ++j) map.at(i, j, 1) = 1.0f;
  InMemoryDataset ds(m, {map});
  std::vector<std::vector<ScoredBox>> props(1);
  props[0] = {{rec.objects[0].box, 1.0}, {rec.objects[1].box, 1.0},
              {{0, 96, 32, 128}, 0.0}, {{96, 0, 128, 32}, 0.0}, {{48, 0, 80, 16}, 0.0}};
  auto cfg = small_detector();
  cfg.features.context_radius = 0;
  cfg.kernel.sigma = 1.0;
  const auto res = train_online_detector(ds, props, cfg, 2);
  for (int c = 0; c < 2; ++c) {
    // Proposal + injected copy of its own object, the other object twice, three background boxes.
    CHECK(res.classes[c].positives == 2);
    CHECK(res.classes[c].negatives_from_other_classes == 2);
    CHECK(res.classes[c].negatives == 5);
  }
  // Exact ground-truth proposals leave nothing to refine.
  for (int c = 0; c < 2; ++c) {
    const auto f = region_feature(map, rec.objects[c].box, cfg.features.mode, cfg.features.pool,
                                  cfg.features.samples_per_bin);
    const auto d = predict_delta(res.model.heads[c].regressors, f.values).as_array();
    for (double v : d) CHECK(std::abs(v) < 1e-9);
    CHECK(res.model.heads[c].classifier.score(f.values) > 0);
  }
}

TEST_CASE("class without foreground is degenerate") {
  const auto& t = trained();
  const auto res = train_online_detector(t.data, t.proposals, small_detector(), 6);
  CHECK(res.model.heads[5].degenerate);
  CHECK(res.warnings.size() == 1);
}

TEST_CASE("detections") {
  const auto& model = trained().det.model;
  const auto test = generate_synthetic(synth(4, 77));
  const auto props = sampled_proposals(test, 2);
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto& rec = test.record(k);
    const auto dets = detect_on_proposals(model, *test.feature_map(k), rec.size, props[k]);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      CHECK(dets[i].box.x1 >= 0.0);
      CHECK(dets[i].box.x2 <= rec.size.width);
      CHECK(dets[i].box.y2 <= rec.size.height);
      CHECK(dets[i].score >= model.score_threshold);
      if (i > 0) CHECK(dets[i].score <= dets[i - 1].score);
    }
  }
  auto strict = model;
  strict.score_threshold = 1e9;
  CHECK(detect_on_proposals(strict, *test.feature_map(0), test.record(0).size, props[0]).empty());
}

TEST_CASE("single planted object is detected with its class") {
  auto s = synth(30, 3);
  const auto train = generate_synthetic(s);
  const auto rpn = train_online_rpn(train, small_rpn());
  const auto det = train_online_detector(train, rpn.model, small_detector(), 5);
  s.n_images = 1;
  s.min_objects = s.max_objects = 1;
  for (std::uint64_t seed : {40u, 41u, 42u}) {
    s.seed = seed;
    const auto one = generate_synthetic(s);
    const auto& rec = one.record(0);
    REQUIRE(rec.objects.size() == 1);
    const auto d = detect(det.model, rpn.model, *one.feature_map(0), rec.size, 300);
    REQUIRE_FALSE(d.empty());
    CHECK(d[0].class_id == rec.objects[0].class_id);
    CHECK(iou(d[0].box, rec.objects[0].box) >= 0.5);
  }
}

TEST_CASE("no suppression across classes") {
  OnlineDetectorModel m;
  m.features.pool = 1;
  m.input_channels = 2;
  m.heads.resize(2);
  for (int c = 0; c < 2; ++c) {
    m.heads[c].classifier = NystromModel::constant(0.5 + c, 2);
    for (auto& r : m.heads[c].regressors) r = RidgeModel::zero(2, 1.0);
  }
  FeatureMap map(4, 4, 2, 16);
  const std::vector<ScoredBox> props{{{8, 8, 40, 40}, 1.0}, {{9, 8, 41, 40}, 0.9}};
  const auto d = detect_on_proposals(m, map, {64, 64}, props);
  REQUIRE(d.size() == 2);
  CHECK(d[0].class_id == 1);
  CHECK(d[1].class_id == 0);
  CHECK(d[0].box == d[1].box);
  FeatureMap bad(4, 4, 3, 16);
  CHECK_THROWS_AS(detect_on_proposals(m, bad, {64, 64}, props), DimensionError);
}

TEST_CASE("detector serialization and determinism") {
  const auto& t = trained();
  const auto bytes = serialize(t.det.model);
  const auto back = deserialize_detector(bytes);
  CHECK(serialize(back) == bytes);
  CHECK(back.features.context_radius == 1);
  const auto again = train_online_detector(t.data, t.proposals, small_detector(), 5);
  CHECK(serialize(again.model) == bytes);
  auto cut = bytes;
  cut.resize(40);
  CHECK_THROWS_AS(deserialize_detector(cut), DataError);
}
