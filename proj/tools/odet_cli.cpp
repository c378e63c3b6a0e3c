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

// odet command-line front end. Links only the C API.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "odet/odet.h"

namespace {

using nlohmann::json;

// Exit codes: 0 ok, 2 config, 3 data, 4 training and everything else.
int exit_code(odet_status s) {
  switch (s) {
    case ODET_OK:
      return 0;
    case ODET_ERR_INVALID_ARGUMENT:
    case ODET_ERR_CONFIG:
      return 2;
    case ODET_ERR_DATA:
      return 3;
    default:
      return 4;
  }
}

struct Failure {
  odet_status status;
  std::string message;
};

void check(odet_status s) {
  if (s != ODET_OK) throw Failure{s, odet_last_error()};
}

// Owns a string returned by the library.
struct LibString {
  char* p = nullptr;
  ~LibString() { odet_string_free(p); }
  std::string str() const { return p == nullptr ? std::string() : std::string(p); }
};

std::string read_text(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw Failure{ODET_ERR_CONFIG, "cannot read config file " + path};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Failure{ODET_ERR_DATA, "cannot write " + path};
  out << text;
}

// "--a.b value" / "--a.b=value" extras become "a.b=value" overrides.
std::vector<std::string> dotted_overrides(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < extras.size(); ++k) {
    const std::string& arg = extras[k];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) {
      throw Failure{ODET_ERR_CONFIG, "unexpected argument '" + arg + "'"};
    }
    const std::string body = arg.substr(2);
    if (body.find('=') != std::string::npos) {
      out.push_back(body);
    } else if (k + 1 < extras.size()) {
      out.push_back(body + "=" + extras[++k]);
    } else {
      throw Failure{ODET_ERR_CONFIG, "option '" + arg + "' needs a value"};
    }
  }
  return out;
}

using Resolver = odet_status (*)(const char*, const char* const*, size_t, char**);

std::string resolve(Resolver fn, const std::string& config_path, const std::vector<std::string>& overrides) {
  const std::string text = read_text(config_path);
  std::vector<const char*> ptrs;
  for (const auto& o : overrides) ptrs.push_back(o.c_str());
  LibString out;
  check(fn(text.empty() ? nullptr : text.c_str(), ptrs.data(), ptrs.size(), &out.p));
  return out.str();
}

std::vector<int> parse_counts(const std::string& list) {
  std::vector<int> out;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Failure{ODET_ERR_CONFIG, "bad proposal count '" + tok + "'"};
    }
  }
  if (out.empty()) throw Failure{ODET_ERR_CONFIG, "empty proposal count list"};
  return out;
}

struct Dataset {
  odet_dataset* p = nullptr;
  explicit Dataset(const std::string& path) { check(odet_dataset_open(path.c_str(), &p)); }
  ~Dataset() { odet_dataset_free(p); }
};

struct Rpn {
  odet_rpn* p = nullptr;
  ~Rpn() { odet_rpn_free(p); }
};

struct Detector {
  odet_detector* p = nullptr;
  ~Detector() { odet_detector_free(p); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"On-line object detection: RPN and detection head trained with kernel classifiers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", odet_version());

  // synth
  std::string synth_config, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic train/val/test task");
  synth->add_option("--config", synth_config, "Synthetic task JSON");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->allow_extras();

  // train-rpn
  std::string rpn_train, rpn_out, rpn_config, rpn_dump;
  std::uint64_t rpn_seed = 0;
  int rpn_workers = 0, rpn_top_n = 300;
  auto* train_rpn = app.add_subcommand("train-rpn", "Train the on-line RPN");
  train_rpn->add_option("--train", rpn_train, "Training manifest")->required();
  train_rpn->add_option("--out", rpn_out, "Model file to write")->required();
  train_rpn->add_option("--config", rpn_config, "RPN config JSON");
  train_rpn->add_option("--seed", rpn_seed, "Random seed");
  train_rpn->add_option("--workers", rpn_workers, "Worker threads (0 = all cores)");
  train_rpn->add_option("--dump-proposals", rpn_dump, "Also write training-set proposals here");
  train_rpn->add_option("--top-n", rpn_top_n, "Proposals per image for --dump-proposals");
  train_rpn->allow_extras();

  // train-detector
  std::string det_train, det_rpn, det_out, det_config;
  std::uint64_t det_seed = 0;
  int det_workers = 0;
  auto* train_det = app.add_subcommand("train-detector", "Train the on-line detection head");
  train_det->add_option("--train", det_train, "Training manifest")->required();
  train_det->add_option("--rpn", det_rpn, "Trained RPN model")->required();
  train_det->add_option("--out", det_out, "Model file to write")->required();
  train_det->add_option("--config", det_config, "Detector config JSON");
  train_det->add_option("--seed", det_seed, "Random seed");
  train_det->add_option("--workers", det_workers, "Worker threads (0 = all cores)");
  train_det->allow_extras();

  // run / search
  std::string run_config, search_config;
  std::uint64_t run_seed = 0, search_seed = 0;
  bool print_config = false, analysis = false;
  auto* run = app.add_subcommand("run", "Full two-stage protocol with evaluation");
  run->add_option("--config", run_config, "Experiment config JSON");
  run->add_option("--seed", run_seed, "Random seed")->required();
  run->add_flag("--print-config", print_config, "Print the resolved config and exit");
  run->allow_extras();
  auto* search = app.add_subcommand("search", "Validation-driven (sigma, lambda) search");
  search->add_option("--config", search_config, "Experiment config JSON");
  search->add_option("--seed", search_seed, "Random seed")->required();
  search->add_flag("--analysis", analysis, "Also score every grid point on the test split");
  search->allow_extras();

  // eval-ar / ar-curve
  std::string ar_manifest, ar_props, ar_rpn;
  int ar_top_n = 100, ar_workers = 0;
  auto* eval_ar = app.add_subcommand("eval-ar", "Average recall of proposal dumps");
  eval_ar->add_option("--manifest", ar_manifest, "Ground-truth manifest")->required();
  eval_ar->add_option("--proposals", ar_props, "Proposal dump directory")->required();
  eval_ar->add_option("--rpn", ar_rpn, "Generate the dumps with this RPN first");
  eval_ar->add_option("--top-n", ar_top_n, "Proposals per image");
  eval_ar->add_option("--workers", ar_workers, "Worker threads when generating");

  std::string curve_manifest, curve_props, curve_rpn, curve_counts = "10,25,50,100,150,300", curve_csv;
  int curve_workers = 0;
  auto* curve = app.add_subcommand("ar-curve", "AR as a function of the proposal count");
  curve->add_option("--manifest", curve_manifest, "Ground-truth manifest")->required();
  curve->add_option("--proposals", curve_props, "Proposal dump directory")->required();
  curve->add_option("--rpn", curve_rpn, "Generate the dumps with this RPN first");
  curve->add_option("--n", curve_counts, "Comma-separated proposal counts");
  curve->add_option("--csv", curve_csv, "Also write the curve as CSV");
  curve->add_option("--workers", curve_workers, "Worker threads when generating");

  // eval-map
  std::string map_manifest, map_dets, map_rpn, map_det, map_mode = "voc07";
  double map_iou = 0.5;
  int map_top_n = 300, map_workers = 0;
  auto* eval_map = app.add_subcommand("eval-map", "Mean average precision of detection dumps");
  eval_map->add_option("--manifest", map_manifest, "Ground-truth manifest")->required();
  eval_map->add_option("--detections", map_dets, "Detection dump directory")->required();
  eval_map->add_option("--rpn", map_rpn, "With --detector, generate the dumps first");
  eval_map->add_option("--detector", map_det, "With --rpn, generate the dumps first");
  eval_map->add_option("--top-n", map_top_n, "Proposals scored per image when generating");
  eval_map->add_option("--iou", map_iou, "IoU threshold");
  eval_map->add_option("--mode", map_mode, "voc07 or all_points");
  eval_map->add_option("--workers", map_workers, "Worker threads when generating");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      const auto cfg = resolve(odet_synth_config_resolve, synth_config, dotted_overrides(synth->remaining()));
      LibString out;
      check(odet_synth_generate(cfg.c_str(), synth_out.c_str(), &out.p));
      std::cout << out.str() << "\n";
    } else if (*train_rpn) {
      const auto cfg = resolve(odet_rpn_config_resolve, rpn_config, dotted_overrides(train_rpn->remaining()));
      Dataset train(rpn_train);
      Rpn rpn;
      LibString report;
      check(odet_rpn_train(train.p, cfg.c_str(), rpn_seed, rpn_workers, &rpn.p, &report.p));
      check(odet_rpn_save(rpn.p, rpn_out.c_str()));
      if (!rpn_dump.empty()) check(odet_rpn_write_proposals(rpn.p, train.p, rpn_top_n, rpn_dump.c_str(), rpn_workers));
      std::cout << report.str() << "\n";
    } else if (*train_det) {
      const auto cfg = resolve(odet_detector_config_resolve, det_config, dotted_overrides(train_det->remaining()));
      Dataset train(det_train);
      Rpn rpn;
      check(odet_rpn_load(det_rpn.c_str(), &rpn.p));
      Detector det;
      LibString report;
      check(odet_detector_train(train.p, rpn.p, cfg.c_str(), det_seed, det_workers, &det.p, &report.p));
      check(odet_detector_save(det.p, det_out.c_str()));
      std::cout << report.str() << "\n";
    } else if (*run || *search) {
      auto overrides = dotted_overrides((*run ? run : search)->remaining());
      overrides.push_back("seed=" + std::to_string(*run ? run_seed : search_seed));
      const auto cfg = resolve(odet_experiment_config_resolve, *run ? run_config : search_config, overrides);
      if (*run && print_config) {
        std::cout << cfg << "\n";
        return 0;
      }
      LibString out;
      if (*run) {
        check(odet_run_experiment(cfg.c_str(), &out.p));
      } else {
        check(odet_hyperparameter_search(cfg.c_str(), analysis ? 1 : 0, &out.p));
      }
      std::cout << out.str() << "\n";
    } else if (*eval_ar) {
      if (!ar_rpn.empty()) {
        Dataset ds(ar_manifest);
        Rpn rpn;
        check(odet_rpn_load(ar_rpn.c_str(), &rpn.p));
        check(odet_rpn_write_proposals(rpn.p, ds.p, ar_top_n, ar_props.c_str(), ar_workers));
      }
      LibString out;
      check(odet_eval_ar(ar_manifest.c_str(), ar_props.c_str(), ar_top_n, &out.p));
      std::cout << out.str() << "\n";
    } else if (*curve) {
      const auto counts = parse_counts(curve_counts);
      if (!curve_rpn.empty()) {
        int max_n = 0;
        for (int n : counts) max_n = std::max(max_n, n);
        Dataset ds(curve_manifest);
        Rpn rpn;
        check(odet_rpn_load(curve_rpn.c_str(), &rpn.p));
        check(odet_rpn_write_proposals(rpn.p, ds.p, max_n, curve_props.c_str(), curve_workers));
      }
      LibString out;
      check(odet_ar_curve(curve_manifest.c_str(), curve_props.c_str(), counts.data(), counts.size(), &out.p));
      if (!curve_csv.empty()) {
        std::ostringstream csv;
        csv << "n,ar,truncated\n";
        for (const auto& p : json::parse(out.str())["curve"]) {
          csv << p["n"].get<int>() << ',' << p["ar"].dump() << ',' << (p["truncated"].get<bool>() ? 1 : 0) << '\n';
        }
        write_text(curve_csv, csv.str());
      }
      std::cout << out.str() << "\n";
    } else if (*eval_map) {
      if (map_rpn.empty() != map_det.empty()) {
        throw Failure{ODET_ERR_CONFIG, "--rpn and --detector must be given together"};
      }
      if (!map_rpn.empty()) {
        Dataset ds(map_manifest);
        Rpn rpn;
        Detector det;
        check(odet_rpn_load(map_rpn.c_str(), &rpn.p));
        check(odet_detector_load(map_det.c_str(), &det.p));
        check(odet_detector_write_detections(det.p, rpn.p, ds.p, map_top_n, map_dets.c_str(), map_workers));
      }
      LibString out;
      check(odet_eval_map(map_manifest.c_str(), map_dets.c_str(), map_iou, map_mode.c_str(), &out.p));
      std::cout << out.str() << "\n";
    }
  } catch (const Failure& f) {
    std::cerr << "odet: " << f.message << "\n";
    return exit_code(f.status);
  }
  return 0;
}
