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

#include <span>
#include <string>

#include <json.hpp>

#include "odet/data.hpp"
#include "odet/detector.hpp"
#include "odet/error.hpp"
#include "odet/eval.hpp"
#include "odet/experiment.hpp"
#include "odet/rpn.hpp"

namespace odet::detail {

using nlohmann::json;

json to_json(const SynthConfig& c);
json to_json(const SynthTaskConfig& c);
json to_json(const KernelHyperParams& c);
json to_json(const MinibootstrapConfig& c);
json to_json(const AnchorConfig& c);
json to_json(const RpnConfig& c);       // without anchors, seed and workers
json to_json(const DetectorConfig& c);  // without seed and workers
json to_json(const ExperimentConfig& c);

void from_json(const json& j, SynthConfig& c);
void from_json(const json& j, SynthTaskConfig& c);
void from_json(const json& j, KernelHyperParams& c);
void from_json(const json& j, MinibootstrapConfig& c);
void from_json(const json& j, AnchorConfig& c);
void from_json(const json& j, RpnConfig& c);
void from_json(const json& j, DetectorConfig& c);
void from_json(const json& j, ExperimentConfig& c);

/// Overlays `patch` onto `base`. Every key of `patch` must exist in `base`;
/// objects merge recursively, everything else is replaced.
void merge_strict(json& base, const json& patch, const std::string& where = "");

/// Applies "dotted.name=value" overrides. The value is read as JSON when it
/// parses, otherwise as a string.
void apply_overrides(json& base, std::span<const std::string> overrides);

/// defaults <- text <- overrides, then converts. nlohmann type errors become
/// ConfigError naming the offending field.
template <typename T>
T resolve(const T& defaults, const std::string& text, std::span<const std::string> overrides) {
  json j = to_json(defaults);
  if (!text.empty()) {
    json user;
    try {
      user = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    merge_strict(j, user);
  }
  apply_overrides(j, overrides);
  T out = defaults;
  try {
    from_json(j, out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  return out;
}

json to_json(const MapResult& m);
json to_json(std::span<const ArPoint> curve);

}  // namespace odet::detail
