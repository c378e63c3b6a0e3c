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

#include "odet/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "config_json.hpp"
#include "odet/error.hpp"
#include "odet/parallel.hpp"

namespace odet {

namespace fs = std::filesystem;
using detail::json;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Runs fn, prefixing any error with the stage name while keeping its code.
template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("[") + name + "] " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kInternal, std::string("[") + name + "] " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) {
    throw ConfigError(std::string(what) + " '" + path + "' does not exist");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json split_json(const SplitMetrics& m, int ar_top_n) {
  json j = detail::to_json(m.map);
  j["ar"] = m.ar;
  j["ar_top_n"] = ar_top_n;
  j["ar_curve"] = detail::to_json(std::span<const ArPoint>(m.ar_curve));
  return j;
}

void check_classes(const Dataset& train, const Dataset& other, const char* split) {
  if (other.manifest().classes != train.manifest().classes) {
    throw DataError(std::string(split) + " manifest class table differs from the train manifest");
  }
}

int max_proposals(const ExperimentConfig& cfg) {
  int n = std::max(cfg.eval.ar_top_n, cfg.detect_proposals);
  for (int c : cfg.proposal_counts) n = std::max(n, c);
  return n;
}

std::vector<std::vector<ScoredBox>> propose_all(const OnlineRpnModel& rpn, const ImageSource& data,
                                                int top_n, int workers) {
  std::vector<std::vector<ScoredBox>> out(data.size());
  parallel_for(data.size(), workers, [&](std::size_t k) {
    out[k] = propose_regions(rpn, *data.feature_map(k), data.record(k).size, top_n);
  });
  return out;
}

std::vector<std::vector<Detection>> detect_all(const OnlineDetectorModel& model, const ImageSource& data,
                                               const std::vector<std::vector<ScoredBox>>& proposals,
                                               int top_n, int workers) {
  std::vector<std::vector<Detection>> out(data.size());
  parallel_for(data.size(), workers, [&](std::size_t k) {
    const std::size_t n = std::min(proposals[k].size(), static_cast<std::size_t>(top_n));
    out[k] = detect_on_proposals(model, *data.feature_map(k), data.record(k).size,
                                 std::span<const ScoredBox>(proposals[k].data(), n));
  });
  return out;
}

// Proposal-side metrics: AR@top_n and the AR curve. Lists are NMS prefixes,
// so the top-n of the longest list equals a run with top_n = n.
void proposal_metrics(const ExperimentConfig& cfg, const Dataset& data,
                      const std::vector<std::vector<ScoredBox>>& proposals, SplitMetrics& m) {
  const auto gt = gt_boxes(data.manifest());
  const int top[1] = {cfg.eval.ar_top_n};
  m.ar = ar_curve(proposals, gt, top, cfg.eval.ar_match).front().ar;
  m.ar_curve = ar_curve(proposals, gt, cfg.proposal_counts, cfg.eval.ar_match);
}

void dump_split(const fs::path& root, const std::string& split, const Dataset& data,
                const std::vector<std::vector<ScoredBox>>& proposals,
                const std::vector<std::vector<Detection>>& detections) {
  const fs::path pdir = root / "proposals" / split;
  const fs::path ddir = root / "detections" / split;
  fs::create_directories(pdir);
  fs::create_directories(ddir);
  for (std::size_t k = 0; k < data.size(); ++k) {
    const std::string name = data.record(k).id + ".txt";
    write_proposal_dump(pdir / name, proposals[k]);
    write_detection_dump(ddir / name, detections[k]);
  }
}

std::string curve_csv(std::span<const ArPoint> curve) {
  std::ostringstream out;
  out << "n,ar,truncated\n";
  for (const auto& p : curve) out << p.n << ',' << fmt(p.ar) << ',' << (p.truncated ? 1 : 0) << '\n';
  return out.str();
}

struct RpnStage {
  OnlineRpnModel model;
  bool frozen = false;
  double seconds = 0.0;
};

RpnStage rpn_stage(const ExperimentConfig& cfg, const Dataset& train, ExperimentReport& report,
                   const fs::path& out) {
  return stage("rpn", [&] {
    RpnStage s;
    if (!cfg.rpn_model.empty()) {
      s.model = load_rpn(cfg.rpn_model);
      s.frozen = true;
      return s;
    }
    Stopwatch sw;
    auto r = train_online_rpn(train, cfg.resolved_rpn());
    s.seconds = sw.seconds();
    for (auto& w : r.warnings) report.warnings.push_back("rpn: " + w);
    if (!out.empty()) {
      save_rpn(r.model, out / "rpn.orpn");
      fs::create_directories(out / "traces");
      for (std::size_t a = 0; a < r.anchors.size(); ++a) {
        write_text(out / "traces" / ("rpn_anchor_" + std::to_string(a) + ".csv"), trace_csv(r.anchors[a].trace));
      }
    }
    s.model = std::move(r.model);
    return s;
  });
}

}  // namespace

// ----------------------------------------------------------- configuration

SynthTaskConfig SynthTaskConfig::benchmark() {
  SynthTaskConfig c;
  c.base.prototype_correlation = 0.6;
  c.base.seed = 1;
  c.base.prototype_seed = 1;
  return c;
}

SynthConfig SynthTaskConfig::split_config(const std::string& split) const {
  SynthConfig c = base;
  c.split = split;
  c.id_prefix = split;
  if (split == "train") {
    c.n_images = n_train;
    c.seed = mix_seed(base.seed, 0);
  } else if (split == "val") {
    c.n_images = n_val;
    c.seed = mix_seed(base.seed, 1);
  } else if (split == "test") {
    c.n_images = n_test;
    c.seed = mix_seed(base.seed, 2);
  } else {
    throw ConfigError("unknown split '" + split + "'");
  }
  return c;
}

void SynthTaskConfig::validate() const {
  if (n_train < 1) throw ConfigError("synth n_train must be >= 1");
  if (n_val < 0 || n_test < 0) throw ConfigError("synth n_val and n_test must be >= 0");
  base.validate();
}

SynthTaskPaths generate_synthetic_task(const SynthTaskConfig& cfg, const fs::path& dir) {
  cfg.validate();
  SynthTaskPaths p;
  p.train = generate_synthetic_dataset(cfg.split_config("train"), dir / "train");
  p.val = generate_synthetic_dataset(cfg.split_config("val"), dir / "val");
  p.test = generate_synthetic_dataset(cfg.split_config("test"), dir / "test");
  return p;
}

ExperimentConfig ExperimentConfig::benchmark() {
  ExperimentConfig c;
  c.rpn.context_radius = 2;
  c.rpn.minibootstrap.n_batches = 2;
  c.rpn.minibootstrap.batch_size = 1000;
  c.rpn.kernel.sigma = 4.0;
  c.rpn.kernel.lambda = 1e-3;
  c.rpn.kernel.m_centers = 500;
  c.rpn.ridge_lambda = 1.0;
  c.detector.features.pool = 3;
  c.detector.features.context_radius = 1;
  c.detector.minibootstrap.n_batches = 2;
  c.detector.minibootstrap.batch_size = 1000;
  c.detector.kernel.sigma = 4.0;
  c.detector.kernel.lambda = 1e-3;
  c.detector.kernel.m_centers = 500;
  c.detector.ridge_lambda = 10.0;
  c.grid.sigma = {2.0, 4.0, 8.0};
  c.grid.lambda = {1e-4, 1e-3, 1e-2};
  return c;
}

RpnConfig ExperimentConfig::resolved_rpn() const {
  RpnConfig r = rpn;
  r.anchors = anchors;
  r.seed = mix_seed(seed, 0x5250);
  r.workers = workers;
  return r;
}

DetectorConfig ExperimentConfig::resolved_detector() const {
  DetectorConfig d = detector;
  d.seed = mix_seed(seed, 0x4454);
  d.workers = workers;
  return d;
}

void ExperimentConfig::validate(bool check_paths) const {
  if (train_manifest.empty()) throw ConfigError("train_manifest is required");
  if (check_paths) {
    require_file(train_manifest, "train_manifest");
    if (!val_manifest.empty()) require_file(val_manifest, "val_manifest");
    if (!test_manifest.empty()) require_file(test_manifest, "test_manifest");
    if (!rpn_model.empty()) require_file(rpn_model, "rpn_model");
  }
  if (grid.sigma.empty() || grid.lambda.empty()) throw ConfigError("grid.sigma and grid.lambda must be nonempty");
  for (double s : grid.sigma) {
    if (!(s > 0.0)) throw ConfigError("grid.sigma values must be > 0");
  }
  for (double l : grid.lambda) {
    if (!(l > 0.0)) throw ConfigError("grid.lambda values must be > 0");
  }
  if (proposal_counts.empty()) throw ConfigError("proposal_counts must be nonempty");
  for (int n : proposal_counts) {
    if (n < 1) throw ConfigError("proposal_counts values must be >= 1");
  }
  if (detect_proposals < 1) throw ConfigError("detect_proposals must be >= 1");
  if (eval.ar_top_n < 1) throw ConfigError("eval.ar_top_n must be >= 1");
  if (!(eval.map_iou > 0.0 && eval.map_iou < 1.0)) throw ConfigError("eval.map_iou must be in (0, 1)");
  eval.ar_match.validate();
  if (workers < 0) throw ConfigError("workers must be >= 0");
  resolved_rpn().validate();
  resolved_detector().validate();
}

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         std::span<const std::string> overrides) {
  return detail::resolve(ExperimentConfig::benchmark(), json_text, overrides);
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  return detail::to_json(cfg).dump(2);
}

SynthTaskConfig parse_synth_task_config(const std::string& json_text,
                                        std::span<const std::string> overrides) {
  return detail::resolve(SynthTaskConfig::benchmark(), json_text, overrides);
}

std::string synth_task_config_to_json(const SynthTaskConfig& cfg) { return detail::to_json(cfg).dump(2); }

RpnConfig parse_rpn_config(const std::string& json_text, std::span<const std::string> overrides) {
  const ExperimentConfig b = ExperimentConfig::benchmark();
  RpnConfig defaults = b.rpn;
  defaults.anchors = b.anchors;
  // Anchors are part of the standalone RPN schema.
  json j = detail::to_json(defaults);
  j["anchors"] = detail::to_json(defaults.anchors);
  if (!json_text.empty()) {
    json user;
    try {
      user = json::parse(json_text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    detail::merge_strict(j, user);
  }
  detail::apply_overrides(j, overrides);
  RpnConfig out = defaults;
  try {
    detail::from_json(j, out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  return out;
}

DetectorConfig parse_detector_config(const std::string& json_text,
                                     std::span<const std::string> overrides) {
  return detail::resolve(ExperimentConfig::benchmark().detector, json_text, overrides);
}

std::string trace_csv(std::span<const MinibootstrapTraceLine> trace) {
  std::ostringstream out;
  out << "iteration,batch,additions,evictions,hard_set_size,cg_iterations,fit_residual\n";
  for (const auto& t : trace) {
    out << t.iteration << ',' << t.batch << ',' << t.additions << ',' << t.evictions << ','
        << t.hard_set_size << ',' << t.cg_iterations << ',' << fmt(t.fit_residual) << '\n';
  }
  return out.str();
}

// ----------------------------------------------------------------- reports

std::string ExperimentReport::to_json() const {
  json j;
  j["timing"] = {{"rpn_train_seconds", rpn_train_seconds},
                 {"detector_train_seconds", detector_train_seconds},
                 {"total_seconds", total_seconds}};
  j["rpn_frozen"] = rpn_frozen;
  j["val"] = val ? split_json(*val, config.eval.ar_top_n) : json(nullptr);
  j["test"] = test ? split_json(*test, config.eval.ar_top_n) : json(nullptr);
  j["warnings"] = warnings;
  j["config"] = detail::to_json(config);
  return j.dump(2);
}

std::string SearchResult::table_csv() const {
  std::ostringstream out;
  out << "sigma,lambda,val_map,test_map,selected,error\n";
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& p = table[k];
    std::string err = p.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << fmt(p.sigma) << ',' << fmt(p.lambda) << ',' << (p.val_map ? fmt(*p.val_map) : "") << ','
        << (p.test_map ? fmt(*p.test_map) : "") << ',' << (k == best ? 1 : 0) << ',' << err << '\n';
  }
  return out.str();
}

std::string SearchResult::to_json() const {
  json rows = json::array();
  for (const auto& p : table) {
    rows.push_back({{"sigma", p.sigma},
                    {"lambda", p.lambda},
                    {"val_map", p.val_map ? json(*p.val_map) : json(nullptr)},
                    {"test_map", p.test_map ? json(*p.test_map) : json(nullptr)},
                    {"error", p.error}});
  }
  json j;
  j["grid"] = rows;
  j["best"] = {{"index", best}, {"sigma", table.at(best).sigma}, {"lambda", table.at(best).lambda}};
  j["report"] = json::parse(report.to_json());
  return j.dump(2);
}

// ------------------------------------------------------------- protocols

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  Stopwatch total;
  stage("config", [&] { cfg.validate(); });
  ExperimentReport report;
  report.config = cfg;
  const fs::path out = cfg.output_dir.empty() ? fs::path() : fs::path(cfg.output_dir);
  if (!out.empty()) {
    stage("output", [&] {
      fs::create_directories(out);
      write_text(out / "config.json", experiment_config_to_json(cfg) + "\n");
    });
  }

  const Dataset train = stage("load-train", [&] { return Dataset::load(cfg.train_manifest); });
  RpnStage rpn = rpn_stage(cfg, train, report, out);
  report.rpn_frozen = rpn.frozen;
  report.rpn_train_seconds = rpn.seconds;

  const OnlineDetectorModel detector = stage("detector", [&] {
    Stopwatch sw;
    auto r = train_online_detector(train, rpn.model, cfg.resolved_detector(), train.num_classes());
    report.detector_train_seconds = sw.seconds();
    for (auto& w : r.warnings) report.warnings.push_back("detector: " + w);
    if (!out.empty()) {
      save_detector(r.model, out / "detector.odet");
      fs::create_directories(out / "traces");
      for (std::size_t c = 0; c < r.classes.size(); ++c) {
        write_text(out / "traces" / ("detector_class_" + std::to_string(c) + ".csv"),
                   trace_csv(r.classes[c].trace));
      }
    }
    return std::move(r.model);
  });

  const int max_n = max_proposals(cfg);
  auto evaluate = [&](const std::string& manifest, const char* split) {
    const std::string tag = std::string("eval-") + split;
    return stage(tag.c_str(), [&] {
      const Dataset data = Dataset::load(manifest);
      check_classes(train, data, split);
      SplitMetrics m;
      const auto proposals = propose_all(rpn.model, data, max_n, cfg.workers);
      proposal_metrics(cfg, data, proposals, m);
      const auto dets = detect_all(detector, data, proposals, cfg.detect_proposals, cfg.workers);
      m.map = mean_ap(dets, gt_objects(data.manifest()), train.num_classes(), cfg.eval.map_iou, cfg.eval.ap_mode);
      for (const auto& w : m.map.warnings) report.warnings.push_back(std::string(split) + ": " + w);
      if (!out.empty()) {
        dump_split(out, split, data, proposals, dets);
        write_text(out / (std::string("ar_curve_") + split + ".csv"), curve_csv(m.ar_curve));
      }
      return m;
    });
  };
  if (!cfg.val_manifest.empty()) report.val = evaluate(cfg.val_manifest, "val");
  if (!cfg.test_manifest.empty()) report.test = evaluate(cfg.test_manifest, "test");

  report.total_seconds = total.seconds();
  if (!out.empty()) stage("output", [&] { write_text(out / "report.json", report.to_json() + "\n"); });
  return report;
}

std::optional<std::size_t> select_grid_point(std::span<const GridPoint> table) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& p = table[k];
    if (!p.val_map) continue;
    if (!best) {
      best = k;
      continue;
    }
    const auto& b = table[*best];
    const bool better = *p.val_map > *b.val_map ||
                        (*p.val_map == *b.val_map &&
                         (p.lambda < b.lambda || (p.lambda == b.lambda && p.sigma < b.sigma)));
    if (better) best = k;
  }
  return best;
}

SearchResult hyperparameter_search(const ExperimentConfig& cfg, bool analysis) {
  Stopwatch total;
  stage("config", [&] {
    cfg.validate();
    if (cfg.val_manifest.empty()) throw ConfigError("search needs val_manifest");
  });
  SearchResult result;
  ExperimentReport& report = result.report;
  report.config = cfg;
  const fs::path out = cfg.output_dir.empty() ? fs::path() : fs::path(cfg.output_dir);
  if (!out.empty()) {
    stage("output", [&] {
      fs::create_directories(out);
      write_text(out / "config.json", experiment_config_to_json(cfg) + "\n");
    });
  }

  const Dataset train = stage("load-train", [&] { return Dataset::load(cfg.train_manifest); });
  const Dataset val = stage("load-val", [&] {
    Dataset d = Dataset::load(cfg.val_manifest);
    check_classes(train, d, "val");
    return d;
  });
  RpnStage rpn = rpn_stage(cfg, train, report, out);
  report.rpn_frozen = rpn.frozen;
  report.rpn_train_seconds = rpn.seconds;

  const DetectorConfig base = cfg.resolved_detector();
  const int max_n = max_proposals(cfg);
  const auto train_props =
      stage("proposals", [&] { return propose_all(rpn.model, train, base.train_proposals, cfg.workers); });
  const auto val_props = stage("proposals", [&] { return propose_all(rpn.model, val, max_n, cfg.workers); });
  const auto val_gt = gt_objects(val.manifest());
  const int n_classes = train.num_classes();

  for (double s : cfg.grid.sigma) {
    for (double l : cfg.grid.lambda) result.table.push_back({s, l, std::nullopt, std::nullopt, ""});
  }
  const std::size_t n_points = result.table.size();
  std::vector<std::optional<OnlineDetectorModel>> models(n_points);
  std::vector<double> seconds(n_points, 0.0);
  std::vector<std::vector<std::string>> warnings(n_points);
  const int inner_workers = n_points > 1 ? 1 : cfg.workers;
  parallel_for(n_points, cfg.workers, [&](std::size_t k) {
    GridPoint& p = result.table[k];
    DetectorConfig d = base;
    d.kernel.sigma = p.sigma;
    d.kernel.lambda = p.lambda;
    d.workers = inner_workers;
    try {
      Stopwatch sw;
      auto r = train_online_detector(train, train_props, d, n_classes);
      seconds[k] = sw.seconds();
      const auto dets = detect_all(r.model, val, val_props, cfg.detect_proposals, inner_workers);
      p.val_map = mean_ap(dets, val_gt, n_classes, cfg.eval.map_iou, cfg.eval.ap_mode).map;
      warnings[k] = std::move(r.warnings);
      models[k] = std::move(r.model);
    } catch (const std::exception& e) {
      p.error = e.what();
    }
  });

  const auto best = select_grid_point(result.table);
  if (!best) {
    std::string msg = "[search] every grid point failed:";
    for (const auto& p : result.table) {
      msg += "\n  sigma=" + fmt(p.sigma) + " lambda=" + fmt(p.lambda) + ": " + p.error;
    }
    throw TrainingError(msg);
  }
  result.best = *best;
  const OnlineDetectorModel& detector = *models[*best];
  report.detector_train_seconds = seconds[*best];
  for (const auto& w : warnings[*best]) report.warnings.push_back("detector: " + w);
  report.config.detector.kernel.sigma = result.table[*best].sigma;
  report.config.detector.kernel.lambda = result.table[*best].lambda;

  stage("eval-val", [&] {
    SplitMetrics m;
    proposal_metrics(cfg, val, val_props, m);
    const auto dets = detect_all(detector, val, val_props, cfg.detect_proposals, cfg.workers);
    m.map = mean_ap(dets, val_gt, n_classes, cfg.eval.map_iou, cfg.eval.ap_mode);
    if (!out.empty()) dump_split(out, "val", val, val_props, dets);
    report.val = std::move(m);
  });

  // The test split is opened only now, after selection.
  if (!cfg.test_manifest.empty()) {
    stage("eval-test", [&] {
      const Dataset test = Dataset::load(cfg.test_manifest);
      check_classes(train, test, "test");
      const auto props = propose_all(rpn.model, test, max_n, cfg.workers);
      const auto gt = gt_objects(test.manifest());
      SplitMetrics m;
      proposal_metrics(cfg, test, props, m);
      const auto dets = detect_all(detector, test, props, cfg.detect_proposals, cfg.workers);
      m.map = mean_ap(dets, gt, n_classes, cfg.eval.map_iou, cfg.eval.ap_mode);
      if (!out.empty()) {
        dump_split(out, "test", test, props, dets);
        write_text(out / "ar_curve_test.csv", curve_csv(m.ar_curve));
      }
      report.test = std::move(m);
      if (analysis) {
        for (std::size_t k = 0; k < n_points; ++k) {
          if (!models[k]) continue;
          const auto d = detect_all(*models[k], test, props, cfg.detect_proposals, cfg.workers);
          result.table[k].test_map = mean_ap(d, gt, n_classes, cfg.eval.map_iou, cfg.eval.ap_mode).map;
        }
      }
    });
  }

  report.total_seconds = total.seconds();
  if (!out.empty()) {
    stage("output", [&] {
      save_detector(detector, out / "detector.odet");
      write_text(out / "search.csv", result.table_csv());
      write_text(out / "report.json", result.to_json() + "\n");
    });
  }
  return result;
}

}  // namespace odet
