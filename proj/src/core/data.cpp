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

#include "odet/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "odet/error.hpp"

namespace odet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kFeatureMagic[] = "OFMV1";
constexpr std::size_t kFeatureHeaderBytes = 5 + 4 * 4;

std::string image_tag(const json& img, std::size_t k) {
  if (img.is_object() && img.contains("id") && img["id"].is_string()) {
    return "image '" + img["id"].get<std::string>() + "'";
  }
  return "image #" + std::to_string(k);
}

}  // namespace

// ---------------------------------------------------------------- codec

std::vector<std::uint8_t> encode_feature_map(const FeatureMap& m) {
  detail::ByteWriter w;
  w.magic(std::string_view(kFeatureMagic, 5));
  w.u32(static_cast<std::uint32_t>(m.height()));
  w.u32(static_cast<std::uint32_t>(m.width()));
  w.u32(static_cast<std::uint32_t>(m.channels()));
  w.u32(static_cast<std::uint32_t>(m.stride()));
  w.bytes().reserve(kFeatureHeaderBytes + m.data().size() * 4);
  for (float v : m.data()) w.f32(v);
  return std::move(w.bytes());
}

FeatureMap decode_feature_map(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes.data(), bytes.size(), "feature map");
  r.expect_magic(std::string_view(kFeatureMagic, 5));
  const auto h = r.u32("h");
  const auto w = r.u32("w");
  const auto f = r.u32("f");
  const std::size_t stride_at = r.offset();
  const auto stride = r.u32("stride");
  if (h == 0 || w == 0 || f == 0) r.fail("zero feature map dimension", 5);
  if (stride == 0) r.fail("zero stride", stride_at);
  const std::size_t count = static_cast<std::size_t>(h) * w * f;
  if (r.remaining() / 4 < count) r.fail("truncated payload, expected " + std::to_string(count) + " floats", r.offset());
  if (r.remaining() != count * 4) r.fail("trailing bytes after payload", r.offset() + count * 4);
  std::vector<float> data(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t at = r.offset();
    data[k] = r.f32("value");
    if (!std::isfinite(data[k])) r.fail("non-finite float", at);
  }
  return FeatureMap(static_cast<int>(h), static_cast<int>(w), static_cast<int>(f),
                    static_cast<int>(stride), std::move(data));
}

void save_feature_map(const FeatureMap& m, const fs::path& path) {
  detail::write_file_bytes(path.string(), encode_feature_map(m));
}

FeatureMap load_feature_map(const fs::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  try {
    return decode_feature_map(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- manifest

DatasetManifest parse_manifest(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("manifest root must be an object");
  if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"] != 1) {
    throw DataError("manifest version must be 1");
  }
  DatasetManifest m;
  m.version = 1;
  if (doc.contains("split")) {
    if (!doc["split"].is_string()) throw DataError("manifest split must be a string");
    m.split = doc["split"].get<std::string>();
  }
  if (!doc.contains("classes") || !doc["classes"].is_array()) {
    throw DataError("manifest needs a classes array");
  }
  for (const auto& c : doc["classes"]) {
    if (!c.is_string()) throw DataError("class names must be strings");
    m.classes.push_back(c.get<std::string>());
  }
  if (!doc.contains("images") || !doc["images"].is_array()) {
    throw DataError("manifest needs an images array");
  }
  const auto& images = doc["images"];
  for (std::size_t k = 0; k < images.size(); ++k) {
    const json& img = images[k];
    const std::string tag = image_tag(img, k);
    if (!img.is_object()) throw DataError(tag + ": record must be an object");
    auto need = [&](const char* key) -> const json& {
      if (!img.contains(key)) throw DataError(tag + ": missing field '" + key + "'");
      return img[key];
    };
    ImageRecord rec;
    if (!need("id").is_string()) throw DataError(tag + ": id must be a string");
    rec.id = img["id"].get<std::string>();
    if (!need("feature_file").is_string()) throw DataError(tag + ": feature_file must be a string");
    rec.feature_file = img["feature_file"].get<std::string>();
    if (!need("width").is_number() || !need("height").is_number()) {
      throw DataError(tag + ": width and height must be numbers");
    }
    rec.size = {img["width"].get<double>(), img["height"].get<double>()};
    if (!(rec.size.width > 0.0) || !(rec.size.height > 0.0)) {
      throw DataError(tag + ": image size must be positive");
    }
    if (img.contains("objects")) {
      if (!img["objects"].is_array()) throw DataError(tag + ": objects must be an array");
      for (const auto& obj : img["objects"]) {
        if (!obj.is_object() || !obj.contains("box") || !obj["box"].is_array() ||
            obj["box"].size() != 4 || !obj.contains("class") || !obj["class"].is_number_integer()) {
          throw DataError(tag + ": object needs box [x1,y1,x2,y2] and integer class");
        }
        for (const auto& v : obj["box"]) {
          if (!v.is_number()) throw DataError(tag + ": box coordinates must be numbers");
        }
        GroundTruth gt;
        gt.box = {obj["box"][0].get<double>(), obj["box"][1].get<double>(),
                  obj["box"][2].get<double>(), obj["box"][3].get<double>()};
        gt.class_id = obj["class"].get<int>();
        if (gt.class_id < 0 || gt.class_id >= static_cast<int>(m.classes.size())) {
          throw DataError(tag + ": class id " + std::to_string(gt.class_id) +
                          " is not in the class table");
        }
        if (!gt.box.valid()) throw DataError(tag + ": degenerate ground-truth box");
        if (gt.box.x1 < 0.0 || gt.box.y1 < 0.0 || gt.box.x2 > rec.size.width ||
            gt.box.y2 > rec.size.height) {
          throw DataError(tag + ": ground-truth box lies outside the image bounds");
        }
        rec.objects.push_back(gt);
      }
    }
    m.images.push_back(std::move(rec));
  }
  return m;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  json doc;
  doc["version"] = 1;
  doc["split"] = manifest.split;
  doc["classes"] = manifest.classes;
  doc["images"] = json::array();
  for (const auto& rec : manifest.images) {
    json img;
    img["id"] = rec.id;
    img["feature_file"] = rec.feature_file;
    img["width"] = rec.size.width;
    img["height"] = rec.size.height;
    img["objects"] = json::array();
    for (const auto& gt : rec.objects) {
      img["objects"].push_back(
          {{"box", {gt.box.x1, gt.box.y1, gt.box.x2, gt.box.y2}}, {"class", gt.class_id}});
    }
    doc["images"].push_back(std::move(img));
  }
  return doc.dump(1);
}

// ---------------------------------------------------------------- datasets

InMemoryDataset::InMemoryDataset(DatasetManifest manifest, std::vector<FeatureMap> maps)
    : manifest_(std::move(manifest)) {
  if (maps.size() != manifest_.images.size()) {
    throw DataError("in-memory dataset: map count does not match the manifest");
  }
  maps_.reserve(maps.size());
  for (auto& m : maps) maps_.push_back(std::make_shared<const FeatureMap>(std::move(m)));
}

Dataset::Dataset(Dataset&&) noexcept = default;
Dataset& Dataset::operator=(Dataset&&) noexcept = default;
Dataset::~Dataset() = default;

Dataset Dataset::load(const fs::path& manifest_path, std::size_t max_resident) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  std::stringstream ss;
  ss << in.rdbuf();

  Dataset ds;
  ds.manifest_ = parse_manifest(ss.str());
  ds.root_ = manifest_path.parent_path();
  ds.max_resident_ = std::max<std::size_t>(1, max_resident);
  ds.cache_ = std::make_unique<Cache>();

  // Header-level checks now; payload decoding is deferred.
  for (const auto& rec : ds.manifest_.images) {
    const fs::path p = ds.root_ / rec.feature_file;
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) {
      throw DataError("image '" + rec.id + "': feature file " + p.string() + " does not exist");
    }
    std::ifstream f(p, std::ios::binary);
    std::vector<std::uint8_t> header(kFeatureHeaderBytes);
    f.read(reinterpret_cast<char*>(header.data()), static_cast<std::streamsize>(header.size()));
    if (f.gcount() != static_cast<std::streamsize>(header.size()) ||
        std::string(header.begin(), header.begin() + 5) != kFeatureMagic) {
      throw DataError("image '" + rec.id + "': " + p.string() + " is not a feature map file");
    }
    detail::ByteReader r(header.data(), header.size(), p.string());
    r.expect_magic(std::string_view(kFeatureMagic, 5));
    const std::size_t count = static_cast<std::size_t>(r.u32("h")) * r.u32("w") * r.u32("f");
    if (fs::file_size(p, ec) != kFeatureHeaderBytes + count * 4) {
      throw DataError("image '" + rec.id + "': " + p.string() + " has the wrong payload size");
    }
  }
  return ds;
}

std::shared_ptr<const FeatureMap> Dataset::feature_map(std::size_t k) const {
  const auto& rec = manifest_.images.at(k);
  {
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto it = cache_->maps.find(k);
    if (it != cache_->maps.end()) {
      cache_->lru.splice(cache_->lru.begin(), cache_->lru, it->second.second);
      return it->second.first;
    }
  }
  std::shared_ptr<const FeatureMap> map;
  try {
    map = std::make_shared<const FeatureMap>(load_feature_map(root_ / rec.feature_file));
  } catch (const DataError& e) {
    throw DataError("image '" + rec.id + "': " + e.what());
  }
  std::lock_guard<std::mutex> lock(cache_->mu);
  ++cache_->decodes;
  auto it = cache_->maps.find(k);
  if (it != cache_->maps.end()) return it->second.first;
  cache_->lru.push_front(k);
  cache_->maps.emplace(k, std::make_pair(map, cache_->lru.begin()));
  while (cache_->maps.size() > max_resident_) {
    const std::size_t victim = cache_->lru.back();
    cache_->lru.pop_back();
    cache_->maps.erase(victim);
  }
  return map;
}

std::size_t Dataset::resident() const {
  std::lock_guard<std::mutex> lock(cache_->mu);
  return cache_->maps.size();
}

std::size_t Dataset::decode_count() const {
  std::lock_guard<std::mutex> lock(cache_->mu);
  return cache_->decodes;
}

// ---------------------------------------------------------------- synthetic

void SynthConfig::validate() const {
  if (n_images < 0) throw ConfigError("synth n_images must be >= 0");
  if (map_h < 1 || map_w < 1 || channels < 1 || stride < 1) {
    throw ConfigError("synth map dimensions and stride must be positive");
  }
  if (n_classes < 1) throw ConfigError("synth n_classes must be >= 1");
  if (!(prototype_correlation >= 0.0 && prototype_correlation < 1.0)) {
    throw ConfigError("synth prototype_correlation must be in [0, 1)");
  }
  const int needed = n_classes + (prototype_correlation > 0.0 ? 1 : 0);
  if (channels < needed) {
    throw ConfigError("synth needs channels >= " + std::to_string(needed) + " for the class prototypes");
  }
  if (min_objects < 0 || max_objects < min_objects) throw ConfigError("synth object count range is invalid");
  if (min_size < 1 || max_size < min_size) throw ConfigError("synth object size range is invalid");
  if (max_size > map_h || max_size > map_w) throw ConfigError("synth objects larger than the map");
  if (!(signature_strength > 0.0)) throw ConfigError("synth signature_strength must be > 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth noise_sigma must be >= 0");
}

Matrix class_prototypes(const SynthConfig& cfg) {
  std::mt19937_64 rng(cfg.prototype_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool shared = cfg.prototype_correlation > 0.0;
  const int n_dirs = cfg.n_classes + (shared ? 1 : 0);
  Matrix protos(n_dirs, cfg.channels);
  for (int c = 0; c < n_dirs; ++c) {
    for (;;) {
      Eigen::RowVectorXd v(cfg.channels);
      for (int k = 0; k < cfg.channels; ++k) v[k] = normal(rng);
      for (int p = 0; p < c; ++p) v -= v.dot(protos.row(p)) * protos.row(p);
      const double norm = v.norm();
      if (norm > 1e-6) {
        protos.row(c) = v / norm;
        break;
      }
    }
  }
  if (!shared) return protos * cfg.signature_strength;
  // Last direction is common to every class: unit prototypes with pairwise cosine rho.
  const double rho = cfg.prototype_correlation;
  Matrix out(cfg.n_classes, cfg.channels);
  for (int c = 0; c < cfg.n_classes; ++c) {
    out.row(c) = std::sqrt(rho) * protos.row(cfg.n_classes) + std::sqrt(1.0 - rho) * protos.row(c);
  }
  return out * cfg.signature_strength;
}

InMemoryDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const Matrix protos = class_prototypes(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  DatasetManifest manifest;
  manifest.split = cfg.split;
  for (int c = 0; c < cfg.n_classes; ++c) manifest.classes.push_back("class_" + std::to_string(c));
  std::vector<FeatureMap> maps;
  maps.reserve(static_cast<std::size_t>(cfg.n_images));

  for (int n = 0; n < cfg.n_images; ++n) {
    FeatureMap map(cfg.map_h, cfg.map_w, cfg.channels, cfg.stride);
    if (cfg.noise_sigma > 0.0) {
      for (float& v : map.data()) v = static_cast<float>(cfg.noise_sigma * noise(rng));
    }
    std::vector<char> occupied(static_cast<std::size_t>(cfg.map_h) * cfg.map_w, 0);
    ImageRecord rec;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d", cfg.id_prefix.c_str(), n);
    rec.id = buf;
    rec.feature_file = "features/" + rec.id + ".ofm";
    rec.size = {static_cast<double>(cfg.map_w) * cfg.stride, static_cast<double>(cfg.map_h) * cfg.stride};

    std::uniform_int_distribution<int> n_obj(cfg.min_objects, cfg.max_objects);
    std::uniform_int_distribution<int> size(cfg.min_size, cfg.max_size);
    std::uniform_int_distribution<int> cls(0, cfg.n_classes - 1);
    const int want = n_obj(rng);
    for (int o = 0; o < want; ++o) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        const int c = cls(rng);
        const int oh = size(rng);
        const int ow = size(rng);
        const int r0 = std::uniform_int_distribution<int>(0, cfg.map_h - oh)(rng);
        const int c0 = std::uniform_int_distribution<int>(0, cfg.map_w - ow)(rng);
        // Reject overlaps and touching neighbours (one-cell gap).
        bool clash = false;
        for (int i = std::max(0, r0 - 1); i < std::min(cfg.map_h, r0 + oh + 1) && !clash; ++i) {
          for (int j = std::max(0, c0 - 1); j < std::min(cfg.map_w, c0 + ow + 1); ++j) {
            if (occupied[static_cast<std::size_t>(i) * cfg.map_w + j]) {
              clash = true;
              break;
            }
          }
        }
        if (clash) continue;
        for (int i = r0; i < r0 + oh; ++i) {
          for (int j = c0; j < c0 + ow; ++j) {
            occupied[static_cast<std::size_t>(i) * cfg.map_w + j] = 1;
            auto cell = map.cell(i, j);
            for (int k = 0; k < cfg.channels; ++k) cell[k] += static_cast<float>(protos(c, k));
          }
        }
        rec.objects.push_back({Box{static_cast<double>(c0) * cfg.stride, static_cast<double>(r0) * cfg.stride,
                                   static_cast<double>(c0 + ow) * cfg.stride,
                                   static_cast<double>(r0 + oh) * cfg.stride},
                               c});
        break;
      }
    }
    manifest.images.push_back(std::move(rec));
    maps.push_back(std::move(map));
  }
  return InMemoryDataset(std::move(manifest), std::move(maps));
}

fs::path write_dataset(const InMemoryDataset& data, const fs::path& dir) {
  fs::create_directories(dir / "features");
  for (std::size_t k = 0; k < data.size(); ++k) {
    save_feature_map(*data.feature_map(k), dir / data.record(k).feature_file);
  }
  const fs::path manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot write " + manifest_path.string());
  out << manifest_to_json(data.manifest()) << "\n";
  return manifest_path;
}

fs::path generate_synthetic_dataset(const SynthConfig& cfg, const fs::path& dir) {
  return write_dataset(generate_synthetic(cfg), dir);
}

}  // namespace odet
