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

#include "odet/rpn.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "model_io.hpp"
#include "odet/error.hpp"
#include "odet/parallel.hpp"

namespace odet {

namespace {

constexpr char kRpnMagic[] = "ORPN1";
constexpr double kDegenerateScore = -1.0;

struct CellRef {
  std::uint32_t image;
  std::uint32_t cell;
};

struct PositiveSample {
  CellRef ref;
  BoxDelta target;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::size_t AnchorAssignment::count(AnchorLabel l) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

AnchorAssignment assign_anchor_labels(std::span<const Anchor> anchors, std::span<const Box> gt,
                                      const ImageSize& image, const AssignmentConfig& cfg) {
  if (anchors.empty()) throw ConfigError("assign_anchor_labels needs at least one anchor");
  const std::size_t n = anchors.size();
  const std::size_t g = gt.size();
  AnchorAssignment out;
  out.labels.assign(n, AnchorLabel::kIgnore);
  out.matched_gt.assign(n, -1);
  out.max_iou.assign(n, 0.0);

  std::vector<char> eligible(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const Box& b = anchors[k].box;
    eligible[k] = b.valid() && fraction_outside(b, image) <= cfg.boundary_fraction;
  }

  std::vector<double> table(n * g, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (!eligible[k]) continue;
    for (std::size_t q = 0; q < g; ++q) {
      const double v = iou(anchors[k].box, gt[q]);
      table[k * g + q] = v;
      if (v > out.max_iou[k]) {
        out.max_iou[k] = v;
        out.matched_gt[k] = static_cast<int>(q);
      }
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    if (!eligible[k]) continue;
    const double m = out.max_iou[k];
    if (g > 0 && m > cfg.positive_iou) {
      out.labels[k] = AnchorLabel::kPositive;
    } else if (g == 0 || m < cfg.negative_iou) {
      out.labels[k] = AnchorLabel::kNegative;
    }
  }

  for (std::size_t q = 0; q < g; ++q) {
    double best = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (eligible[k]) best = std::max(best, table[k * g + q]);
    }
    if (best <= 0.0) continue;
    for (std::size_t k = 0; k < n; ++k) {
      if (eligible[k] && table[k * g + q] == best) out.labels[k] = AnchorLabel::kPositive;
    }
  }
  return out;
}

void RpnConfig::validate() const {
  anchors.validate();
  minibootstrap.validate();
  kernel.validate();
  if (context_radius < 0) throw ConfigError("rpn context_radius must be >= 0");
  if (ridge_lambda < 0.0) throw ConfigError("rpn ridge_lambda must be >= 0");
  if (proposals.pre_nms_top_k < 1 || proposals.post_nms_top_n < 1) {
    throw ConfigError("rpn proposal counts must be >= 1");
  }
  if (!(proposals.nms_threshold > 0.0 && proposals.nms_threshold < 1.0)) {
    throw ConfigError("rpn nms_threshold must be in (0, 1)");
  }
  if (!(assignment.negative_iou <= assignment.positive_iou)) {
    throw ConfigError("rpn negative_iou must not exceed positive_iou");
  }
}

RpnTrainResult train_online_rpn(const ImageSource& data, const RpnConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw TrainingError("on-line RPN training needs at least one image");
  const int n_anchors = static_cast<int>(cfg.anchors.count());

  // Context-stacked maps of the training set and per-anchor sample references.
  std::vector<FeatureMap> samples(data.size());
  std::vector<std::vector<PositiveSample>> positives(n_anchors);
  std::vector<std::vector<CellRef>> negatives(n_anchors);
  int channels = -1;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto map = data.feature_map(k);
    if (channels < 0) channels = map->channels();
    if (map->channels() != channels) {
      throw DataError("image '" + data.record(k).id + "' has " + std::to_string(map->channels()) +
                      " channels, expected " + std::to_string(channels));
    }
    samples[k] = stack_neighbourhood(*map, cfg.context_radius);
    const auto& rec = data.record(k);
    std::vector<Box> gt;
    for (const auto& o : rec.objects) gt.push_back(o.box);
    const auto anchors = generate_anchors(cfg.anchors, map->height(), map->width());
    const auto assign = assign_anchor_labels(anchors, gt, rec.size, cfg.assignment);
    for (std::size_t e = 0; e < anchors.size(); ++e) {
      const auto& an = anchors[e];
      const CellRef ref{static_cast<std::uint32_t>(k),
                        static_cast<std::uint32_t>(an.row * map->width() + an.col)};
      if (assign.labels[e] == AnchorLabel::kPositive) {
        positives[an.index].push_back(
            {ref, encode_deltas(an.box, gt[static_cast<std::size_t>(assign.matched_gt[e])])});
      } else if (assign.labels[e] == AnchorLabel::kNegative) {
        negatives[an.index].push_back(ref);
      }
    }
  }

  RpnTrainResult result;
  result.model.anchors = cfg.anchors;
  result.model.context_radius = cfg.context_radius;
  result.model.input_channels = channels;
  result.model.proposals = cfg.proposals;
  result.model.heads.resize(static_cast<std::size_t>(n_anchors));
  result.anchors.resize(static_cast<std::size_t>(n_anchors));
  const int dim = result.model.sample_dim();
  const double ridge_lambda = cfg.ridge_lambda > 0.0 ? cfg.ridge_lambda : cfg.kernel.lambda;

  auto read_cell = [&](const CellRef& ref, std::span<double> out) {
    const auto src = samples[ref.image].data().subspan(static_cast<std::size_t>(ref.cell) * dim, dim);
    std::copy(src.begin(), src.end(), out.begin());
  };

  parallel_for(static_cast<std::size_t>(n_anchors), cfg.workers, [&](std::size_t a) {
    AnchorHead& head = result.model.heads[a];
    RpnAnchorReport& report = result.anchors[a];
    const auto& pos = positives[a];
    const auto& neg = negatives[a];
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
      read_cell(pos[k].ref, {xp.row(row).data(), static_cast<std::size_t>(dim)});
      const auto t = pos[k].target.as_array();
      for (int c = 0; c < 4; ++c) targets(row, c) = t[c];
    }
    const CallbackPool pool(neg.size(), dim,
                            [&](std::size_t idx, std::span<double> out) { read_cell(neg[idx], out); });
    const LoggingPool logged(pool);
    MinibootstrapConfig mb = cfg.minibootstrap;
    mb.seed = mix_seed(cfg.seed, a);
    auto mbr = run_minibootstrap(xp, logged, mb, cfg.kernel);
    report.negatives_touched = logged.distinct_reads();
    report.trace = std::move(mbr.trace);
    head.classifier = std::move(mbr.model);
    head.regressors = fit_delta_regressors(xp, targets, ridge_lambda);
  });

  std::size_t trained = 0;
  for (int a = 0; a < n_anchors; ++a) {
    if (result.anchors[a].degenerate) {
      result.warnings.push_back("anchor " + std::to_string(a) + " has " +
                                std::to_string(result.anchors[a].positives) + " positives and " +
                                std::to_string(result.anchors[a].negatives) +
                                " negatives; using an always-negative classifier");
    } else {
      ++trained;
    }
  }
  if (trained == 0) throw TrainingError("on-line RPN: no anchor has any positive sample");
  return result;
}

std::vector<ScoredBox> propose_regions(const OnlineRpnModel& model, const FeatureMap& map,
                                       const ImageSize& image, int top_n) {
  if (map.channels() != model.input_channels) {
    throw DimensionError("propose_regions: map has " + std::to_string(map.channels()) +
                         " channels, model expects " + std::to_string(model.input_channels));
  }
  if (top_n < 1) return {};
  const auto stacked = stack_neighbourhood(map, model.context_radius);
  const Matrix x = unroll_feature_map(stacked);
  const auto anchors = generate_anchors(model.anchors, map.height(), map.width());
  const std::size_t n_anchors = model.heads.size();

  std::vector<double> scores(anchors.size());
  for (std::size_t a = 0; a < n_anchors; ++a) {
    const Vector s = model.heads[a].classifier.predict(x);
    for (Eigen::Index cell = 0; cell < s.size(); ++cell) {
      scores[static_cast<std::size_t>(cell) * n_anchors + a] = s[cell];
    }
  }
  std::vector<std::size_t> order(anchors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const int dim = model.sample_dim();
  std::vector<ScoredBox> candidates;
  candidates.reserve(static_cast<std::size_t>(model.proposals.pre_nms_top_k));
  for (std::size_t idx : order) {
    if (candidates.size() >= static_cast<std::size_t>(model.proposals.pre_nms_top_k)) break;
    const auto& an = anchors[idx];
    const std::size_t cell = static_cast<std::size_t>(an.row) * map.width() + an.col;
    const std::span<const double> feat(x.row(static_cast<Eigen::Index>(cell)).data(), static_cast<std::size_t>(dim));
    const auto decoded =
        decode_deltas(an.box, predict_delta(model.heads[an.index].regressors, feat), image);
    if (decoded.degenerate) continue;
    candidates.push_back({decoded.box, scores[idx]});
  }
  const auto keep = nms(candidates, model.proposals.nms_threshold, static_cast<std::size_t>(top_n));
  std::vector<ScoredBox> out;
  out.reserve(keep.size());
  for (std::size_t k : keep) out.push_back(candidates[k]);
  return out;
}

std::vector<std::uint8_t> serialize(const OnlineRpnModel& model) {
  detail::ByteWriter w;
  w.magic(std::string_view(kRpnMagic, 5));
  w.u32(static_cast<std::uint32_t>(model.anchors.scales.size()));
  for (double s : model.anchors.scales) w.f64(s);
  w.u32(static_cast<std::uint32_t>(model.anchors.aspect_ratios.size()));
  for (double r : model.anchors.aspect_ratios) w.f64(r);
  w.u32(static_cast<std::uint32_t>(model.anchors.stride));
  w.u32(static_cast<std::uint32_t>(model.context_radius));
  w.u32(static_cast<std::uint32_t>(model.input_channels));
  w.u32(static_cast<std::uint32_t>(model.proposals.pre_nms_top_k));
  w.f64(model.proposals.nms_threshold);
  w.u32(static_cast<std::uint32_t>(model.proposals.post_nms_top_n));
  w.u32(static_cast<std::uint32_t>(model.heads.size()));
  for (const auto& h : model.heads) {
    w.u32(h.degenerate ? 1u : 0u);
    detail::write_nystrom(w, h.classifier);
    for (const auto& r : h.regressors) detail::write_ridge(w, r);
  }
  return std::move(w.bytes());
}

OnlineRpnModel deserialize_rpn(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes.data(), bytes.size(), "RPN model");
  r.expect_magic(std::string_view(kRpnMagic, 5));
  OnlineRpnModel m;
  const auto ns = r.u32("n_scales");
  if (ns > 4096) r.fail("implausible scale count", r.offset() - 4);
  for (std::uint32_t k = 0; k < ns; ++k) m.anchors.scales.push_back(r.f64("scale"));
  const auto nr = r.u32("n_ratios");
  if (nr > 4096) r.fail("implausible ratio count", r.offset() - 4);
  for (std::uint32_t k = 0; k < nr; ++k) m.anchors.aspect_ratios.push_back(r.f64("ratio"));
  m.anchors.stride = static_cast<int>(r.u32("stride"));
  m.context_radius = static_cast<int>(r.u32("context_radius"));
  m.input_channels = static_cast<int>(r.u32("input_channels"));
  m.proposals.pre_nms_top_k = static_cast<int>(r.u32("pre_nms_top_k"));
  m.proposals.nms_threshold = r.f64("nms_threshold");
  m.proposals.post_nms_top_n = static_cast<int>(r.u32("post_nms_top_n"));
  const std::size_t heads_at = r.offset();
  const auto nh = r.u32("n_heads");
  if (nh != m.anchors.count()) r.fail("head count does not match the anchor config", heads_at);
  for (std::uint32_t k = 0; k < nh; ++k) {
    AnchorHead h;
    h.degenerate = r.u32("degenerate") != 0;
    h.classifier = detail::read_nystrom(r);
    for (auto& reg : h.regressors) reg = detail::read_ridge(r);
    m.heads.push_back(std::move(h));
  }
  if (r.remaining() != 0) r.fail("trailing bytes", r.offset());
  return m;
}

void save_rpn(const OnlineRpnModel& model, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), serialize(model));
}

OnlineRpnModel load_rpn(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  return deserialize_rpn(bytes);
}

}  // namespace odet
