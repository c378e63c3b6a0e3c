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

#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "odet/featuremap.hpp"
#include "odet/geometry.hpp"

namespace odet {

struct GroundTruth {
  Box box;
  int class_id = 0;  // index into the manifest class table
};

struct ImageRecord {
  std::string id;
  std::string feature_file;  // relative to the manifest directory
  ImageSize size;
  std::vector<GroundTruth> objects;
};

struct DatasetManifest {
  int version = 1;
  std::string split;
  std::vector<std::string> classes;
  std::vector<ImageRecord> images;
};

/// Read-only view over a set of annotated feature maps.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::size_t size() const = 0;
  virtual const ImageRecord& record(std::size_t k) const = 0;
  virtual std::shared_ptr<const FeatureMap> feature_map(std::size_t k) const = 0;
  virtual int num_classes() const = 0;
};

/// Dataset held fully in memory (synthetic runs, tests).
class InMemoryDataset final : public ImageSource {
 public:
  InMemoryDataset() = default;
  InMemoryDataset(DatasetManifest manifest, std::vector<FeatureMap> maps);

  std::size_t size() const override { return manifest_.images.size(); }
  const ImageRecord& record(std::size_t k) const override { return manifest_.images.at(k); }
  std::shared_ptr<const FeatureMap> feature_map(std::size_t k) const override { return maps_.at(k); }
  int num_classes() const override { return static_cast<int>(manifest_.classes.size()); }
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  std::vector<std::shared_ptr<const FeatureMap>> maps_;
};

/// Manifest-backed dataset; feature files are decoded on demand and at most
/// `max_resident` decoded maps are cached (least recently used evicted).
class Dataset final : public ImageSource {
 public:
  static Dataset load(const std::filesystem::path& manifest_path, std::size_t max_resident = 64);

  Dataset(const Dataset&) = delete;
  Dataset& operator=(const Dataset&) = delete;
  Dataset(Dataset&&) noexcept;
  Dataset& operator=(Dataset&&) noexcept;
  ~Dataset() override;

  std::size_t size() const override { return manifest_.images.size(); }
  const ImageRecord& record(std::size_t k) const override { return manifest_.images.at(k); }
  std::shared_ptr<const FeatureMap> feature_map(std::size_t k) const override;
  int num_classes() const override { return static_cast<int>(manifest_.classes.size()); }

  const DatasetManifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }
  std::size_t resident() const;
  std::size_t decode_count() const;

 private:
  Dataset() = default;

  struct Cache {
    std::mutex mu;
    std::list<std::size_t> lru;
    std::unordered_map<std::size_t, std::pair<std::shared_ptr<const FeatureMap>,
                                              std::list<std::size_t>::iterator>> maps;
    std::size_t decodes = 0;
  };

  DatasetManifest manifest_;
  std::filesystem::path root_;
  std::size_t max_resident_ = 64;
  std::unique_ptr<Cache> cache_;
};

// Feature-map codec: "OFMV1", u32 h, w, f, stride (little endian), then
// h*w*f little-endian float32 values, h outer, then w, then f.
std::vector<std::uint8_t> encode_feature_map(const FeatureMap& m);
FeatureMap decode_feature_map(std::span<const std::uint8_t> bytes);
void save_feature_map(const FeatureMap& m, const std::filesystem::path& path);
FeatureMap load_feature_map(const std::filesystem::path& path);

/// Parses and validates a manifest JSON document. Box and class checks name
/// the offending image id.
DatasetManifest parse_manifest(const std::string& json_text);
std::string manifest_to_json(const DatasetManifest& manifest);

struct SynthConfig {
  int n_images = 200;
  int map_h = 16;
  int map_w = 16;
  int channels = 8;
  int stride = 16;
  int n_classes = 5;
  int min_objects = 1;
  int max_objects = 3;
  int min_size = 2;   // cells
  int max_size = 5;   // cells
  double signature_strength = 1.0;
  double noise_sigma = 0.1;
  double prototype_correlation = 0.0;  // pairwise cosine between class prototypes
  std::uint64_t seed = 1;
  std::uint64_t prototype_seed = 1;  // class prototypes; shared across splits of one task
  std::string split = "train";
  std::string id_prefix = "img";

  void validate() const;
};

/// C orthonormal directions in R^f scaled by signature_strength (one per row).
Matrix class_prototypes(const SynthConfig& cfg);

/// Planted-signature generator: background cells are N(0, noise_sigma^2) per
/// channel; each object is a rectangle of cells carrying its class prototype
/// plus noise. Objects never overlap or touch. Deterministic in the seeds.
InMemoryDataset generate_synthetic(const SynthConfig& cfg);

/// Writes features/<id>.ofm and manifest.json under dir; returns the manifest path.
std::filesystem::path write_dataset(const InMemoryDataset& data, const std::filesystem::path& dir);

std::filesystem::path generate_synthetic_dataset(const SynthConfig& cfg,
                                                 const std::filesystem::path& dir);

}  // namespace odet
