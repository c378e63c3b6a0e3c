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

#include "odet/detector.hpp"

#include <algorithm>
#include <numeric>

#include "model_io.hpp"
#include "odet/error.hpp"
#include "odet/parallel.hpp"

namespace odet {

namespace {

constexpr char kDetectorMagic[] = "ODET1";
constexpr double kDegenerateScore = -1.0;

struct RegionRef {
  std::uint32_t image;
  Box box;
};

struct ForegroundSample {
  RegionRef ref;
  int class_id;
  BoxDelta target;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0xD1B54A32D192ED03ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

void DetectorConfig::validate() const {
  if (features.pool < 1 || features.samples_per_bin < 1) {
    throw ConfigError("detector pool and samples_per_bin must be >= 1");
  }
  if (features.context_radius < 0) throw ConfigError("detector context_radius must be >= 0");
  if (!(bg_iou <= fg_iou)) throw ConfigError("detector bg_iou must not exceed fg_iou");
  if (train_proposals < 1) throw ConfigError("detector train_proposals must be >= 1");
  if (!(nms_threshold > 0.0 && nms_threshold < 1.0)) {
    throw ConfigError("detector nms_threshold must be in (0, 1)");
  }
  if (max_detections < 1) throw ConfigError("detector max_detections must be >= 1");
  if (ridge_lambda < 0.0) throw ConfigError("detector ridge_lambda must be >= 0");
  minibootstrap.validate();
  kernel.validate();
}

DetectorAssignment assign_detector_labels(std::span<const Box> proposals,
                                          std::span<const GroundTruth> gt, double fg_iou,
                                          double bg_iou, bool inject_gt) {
  DetectorAssignment out;
  out.boxes.assign(proposals.begin(), proposals.end());
  if (inject_gt) {
    for (const auto& g : gt) out.boxes.push_back(g.box);
  }
  const std::size_t n = out.boxes.size();
  out.labels.assign(n, kBackgroundLabel);
  out.matched_gt.assign(n, -1);
  out.max_iou.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t q = 0; q < gt.size(); ++q) {
      const double v = iou(out.boxes[k], gt[q].box);
      if (v > out.max_iou[k]) {
        out.max_iou[k] = v;
        out.matched_gt[k] = static_cast<int>(q);
      }
    }
    if (out.matched_gt[k] >= 0 && out.max_iou[k] >= fg_iou) {
      out.labels[k] = gt[static_cast<std::size_t>(out.matched_gt[k])].class_id;
    } else if (out.max_iou[k] < bg_iou) {
      out.labels[k] = kBackgroundLabel;
    } else {
      out.labels[k] = kIgnoreLabel;
    }
  }
  return out;
}

DetectorTrainResult train_online_detector(const ImageSource& data,
                                          std::span<const std::vector<ScoredBox>> proposals,
                                          const DetectorConfig& cfg, int n_classes) {
  cfg.validate();
  if (n_classes < 1) throw ConfigError("detector needs at least one class");
  if (proposals.size() != data.size()) {
    throw DimensionError("detector training: one proposal list per image is required");
  }
  if (data.size() == 0) throw TrainingError("detector training needs at least one image");

  std::vector<std::shared_ptr<const FeatureMap>> maps(data.size());
  std::vector<ForegroundSample> foreground;
  std::vector<RegionRef> background;
  int channels = -1;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto raw = data.feature_map(k);
    if (channels < 0) channels = raw->channels();
    if (raw->channels() != channels) {
      throw DataError("image '" + data.record(k).id + "' has a different channel count");
    }
    maps[k] = cfg.features.context_radius > 0
                  ? std::make_shared<const FeatureMap>(stack_neighbourhood(*raw, cfg.features.context_radius))
                  : raw;
    const auto& rec = data.record(k);
    std::vector<Box> boxes;
    boxes.reserve(proposals[k].size());
    for (const auto& p : proposals[k]) boxes.push_back(p.box);
    const auto assign =
        assign_detector_labels(boxes, rec.objects, cfg.fg_iou, cfg.bg_iou, cfg.inject_ground_truth);
    for (std::size_t b = 0; b < assign.boxes.size(); ++b) {
      const RegionRef ref{static_cast<std::uint32_t>(k), assign.boxes[b]};
      const int label = assign.labels[b];
      if (label >= 0) {
        if (label >= n_classes) {
          throw DataError("image '" + rec.id + "': class id " + std::to_string(label) +
                          " exceeds the class count");
        }
        const Box& g = rec.objects[static_cast<std::size_t>(assign.matched_gt[b])].box;
        foreground.push_back({ref, label, encode_deltas(ref.box, g)});
      } else if (label == kBackgroundLabel) {
        background.push_back(ref);
      }
    }
  }

  DetectorTrainResult result;
  OnlineDetectorModel& model = result.model;
  model.features = cfg.features;
  model.input_channels = channels;
  model.score_threshold = cfg.score_threshold;
  model.nms_threshold = cfg.nms_threshold;
  model.max_detections = cfg.max_detections;
  model.heads.resize(static_cast<std::size_t>(n_classes));
  result.classes.resize(static_cast<std::size_t>(n_classes));
  const int dim = model.feature_dim();
  const double ridge_lambda = cfg.ridge_lambda > 0.0 ? cfg.ridge_lambda : cfg.kernel.lambda;

  auto featurize = [&](const RegionRef& ref, std::span<double> out) {
    const auto rf = region_feature(*maps[ref.image], ref.box, cfg.features.mode, cfg.features.pool,
                                   cfg.features.samples_per_bin);
    std::copy(rf.values.begin(), rf.values.end(), out.begin());
  };

  parallel_for(static_cast<std::size_t>(n_classes), cfg.workers, [&](std::size_t c) {
    ClassHead& head = model.heads[c];
    DetectorClassReport& report = result.classes[c];
    std::vector<const ForegroundSample*> pos;
    std::vector<const RegionRef*> neg;
    for (const auto& s : foreground) {
      if (s.class_id == static_cast<int>(c)) pos.push_back(&s);
    }
    for (const auto& r : background) neg.push_back(&r);
    for (const auto& s : foreground) {
      if (s.class_id != static_cast<int>(c)) {
        neg.push_back(&s.ref);
        ++report.negatives_from_other_classes;
      }
    }
    report.positives = pos.size();
    report.negatives = neg.size();
    if (pos.empty() || neg.empty()) {
      head.degenerate = true;
      head.classifier = NystromModel::constant(kDegenerateScore, dim, cfg.kernel);
      for (auto& r : head.regressors) r = RidgeModel::zero(dim, ridge_lambda);
      report.degenerate = true;
      return;
    }
    Matrix xp(static_cast<Eigen::Index>(pos.size()), dim);
    Matrix targets(static_cast<Eigen::Index>(pos.size()), 4);
    for (std::size_t k = 0; k < pos.size(); ++k) {
      const auto row = static_cast<Eigen::Index>(k);
      featurize(pos[k]->ref, {xp.row(row).data(), static_cast<std::size_t>(dim)});
      const auto t = pos[k]->target.as_array();
      for (int q = 0; q < 4; ++q) targets(row, q) = t[q];
    }
    const CallbackPool pool(neg.size(), dim,
                            [&](std::size_t idx, std::span<double> out) { featurize(*neg[idx], out); });
    const LoggingPool logged(pool);
    MinibootstrapConfig mb = cfg.minibootstrap;
    mb.seed = mix_seed(cfg.seed, c);
    auto mbr = run_minibootstrap(xp, logged, mb, cfg.kernel);
    report.negatives_touched = logged.distinct_reads();
    report.trace = std::move(mbr.trace);
    head.classifier = std::move(mbr.model);
    head.regressors = fit_delta_regressors(xp, targets, ridge_lambda);
  });

  for (int c = 0; c < n_classes; ++c) {
    if (result.classes[c].degenerate) {
      result.warnings.push_back("class " + std::to_string(c) +
                                " has no foreground samples; using an always-negative classifier");
    }
  }
  return result;
}

DetectorTrainResult train_online_detector(const ImageSource& data, const OnlineRpnModel& rpn,
                                          const DetectorConfig& cfg, int n_classes) {
  cfg.validate();
  std::vector<std::vector<ScoredBox>> proposals(data.size());
  parallel_for(data.size(), cfg.workers, [&](std::size_t k) {
    proposals[k] = propose_regions(rpn, *data.feature_map(k), data.record(k).size, cfg.train_proposals);
  });
  return train_online_detector(data, proposals, cfg, n_classes);
}

std::vector<Detection> detect_on_proposals(const OnlineDetectorModel& model, const FeatureMap& map,
                                           const ImageSize& image,
                                           std::span<const ScoredBox> proposals) {
  if (map.channels() != model.input_channels) {
    throw DimensionError("detect: map channel count does not match the detector");
  }
  const int dim = model.feature_dim();
  const int n_classes = model.num_classes();
  std::vector<ScoredBox> kept_boxes;
  kept_boxes.reserve(proposals.size());
  for (const auto& p : proposals) {
    if (p.box.valid()) kept_boxes.push_back(p);
  }
  const FeatureMap stacked = stack_neighbourhood(map, model.features.context_radius);
  Matrix x(static_cast<Eigen::Index>(kept_boxes.size()), dim);
  for (std::size_t k = 0; k < kept_boxes.size(); ++k) {
    const auto rf = region_feature(stacked, kept_boxes[k].box, model.features.mode, model.features.pool,
                                   model.features.samples_per_bin);
    std::copy(rf.values.begin(), rf.values.end(), x.row(static_cast<Eigen::Index>(k)).data());
  }

  std::vector<Detection> out;
  for (int c = 0; c < n_classes; ++c) {
    const auto& head = model.heads[static_cast<std::size_t>(c)];
    const Vector scores = head.classifier.predict(x);
    std::vector<ScoredBox> cls;
    for (std::size_t k = 0; k < kept_boxes.size(); ++k) {
      const double s = scores[static_cast<Eigen::Index>(k)];
      if (s < model.score_threshold) continue;
      const std::span<const double> feat(x.row(static_cast<Eigen::Index>(k)).data(), static_cast<std::size_t>(dim));
      const auto decoded = decode_deltas(kept_boxes[k].box, predict_delta(head.regressors, feat), image);
      if (decoded.degenerate) continue;
      cls.push_back({decoded.box, s});
    }
    const auto keep = nms(cls, model.nms_threshold, cls.size());
    for (std::size_t k : keep) out.push_back({cls[k].box, c, cls[k].score});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (out.size() > static_cast<std::size_t>(model.max_detections)) {
    out.resize(static_cast<std::size_t>(model.max_detections));
  }
  return out;
}

std::vector<Detection> detect(const OnlineDetectorModel& model, const OnlineRpnModel& rpn,
                              const FeatureMap& map, const ImageSize& image, int top_n) {
  const auto proposals = propose_regions(rpn, map, image, top_n);
  return detect_on_proposals(model, map, image, proposals);
}

std::vector<std::uint8_t> serialize(const OnlineDetectorModel& model) {
  detail::ByteWriter w;
  w.magic(std::string_view(kDetectorMagic, 5));
  w.u32(static_cast<std::uint32_t>(model.features.pool));
  w.u32(static_cast<std::uint32_t>(model.features.samples_per_bin));
  w.u32(model.features.mode == PoolMode::kFlatten ? 0u : 1u);
  w.u32(static_cast<std::uint32_t>(model.features.context_radius));
  w.u32(static_cast<std::uint32_t>(model.input_channels));
  w.f64(model.score_threshold);
  w.f64(model.nms_threshold);
  w.u32(static_cast<std::uint32_t>(model.max_detections));
  w.u32(static_cast<std::uint32_t>(model.heads.size()));
  for (const auto& h : model.heads) {
    w.u32(h.degenerate ? 1u : 0u);
    detail::write_nystrom(w, h.classifier);
    for (const auto& r : h.regressors) detail::write_ridge(w, r);
  }
  return std::move(w.bytes());
}

OnlineDetectorModel deserialize_detector(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes.data(), bytes.size(), "detector model");
  r.expect_magic(std::string_view(kDetectorMagic, 5));
  OnlineDetectorModel m;
  m.features.pool = static_cast<int>(r.u32("pool"));
  m.features.samples_per_bin = static_cast<int>(r.u32("samples_per_bin"));
  const std::size_t mode_at = r.offset();
  const auto mode = r.u32("mode");
  if (mode > 1) r.fail("unknown pooling mode", mode_at);
  m.features.mode = mode == 0 ? PoolMode::kFlatten : PoolMode::kMeanPool;
  const std::size_t radius_at = r.offset();
  m.features.context_radius = static_cast<int>(r.u32("context_radius"));
  if (m.features.context_radius > 64) r.fail("implausible context radius", radius_at);
  m.input_channels = static_cast<int>(r.u32("input_channels"));
  m.score_threshold = r.f64("score_threshold");
  m.nms_threshold = r.f64("nms_threshold");
  m.max_detections = static_cast<int>(r.u32("max_detections"));
  const auto nh = r.u32("n_classes");
  for (std::uint32_t k = 0; k < nh; ++k) {
    ClassHead h;
    h.degenerate = r.u32("degenerate") != 0;
    h.classifier = detail::read_nystrom(r);
    for (auto& reg : h.regressors) reg = detail::read_ridge(r);
    m.heads.push_back(std::move(h));
  }
  if (r.remaining() != 0) r.fail("trailing bytes", r.offset());
  return m;
}

void save_detector(const OnlineDetectorModel& model, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), serialize(model));
}

OnlineDetectorModel load_detector(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  return deserialize_detector(bytes);
}

}  // namespace odet
