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

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "odet/geometry.hpp"

namespace odet {

/// Row-major dense matrix used for sample sets (one sample per row).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Dense h x w x f backbone output for one image, stored row-major
/// (h outer, then w, then f) in single precision.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int h, int w, int f, int stride);
  FeatureMap(int h, int w, int f, int stride, std::vector<float> data);

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return f_; }
  int stride() const { return stride_; }
  std::size_t cells() const { return static_cast<std::size_t>(h_) * w_; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  std::span<const float> cell(int i, int j) const {
    return {data_.data() + offset(i, j), static_cast<std::size_t>(f_)};
  }
  std::span<float> cell(int i, int j) {
    return {data_.data() + offset(i, j), static_cast<std::size_t>(f_)};
  }
  float at(int i, int j, int c) const { return data_[offset(i, j) + c]; }
  float& at(int i, int j, int c) { return data_[offset(i, j) + c]; }

  /// Throws DataError when the buffer size is wrong or a value is not finite.
  void validate() const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t offset(int i, int j) const {
    return (static_cast<std::size_t>(i) * w_ + j) * f_;
  }

  int h_ = 0;
  int w_ = 0;
  int f_ = 0;
  int stride_ = 1;
  std::vector<float> data_;
};

/// One row per cell; row k is cell (k / w, k % w).
Matrix unroll_feature_map(const FeatureMap& m);

/// Stacks the (2r+1) x (2r+1) neighbourhood of every cell into its channel
/// vector (zero outside the map), giving f * (2r+1)^2 channels ordered by
/// neighbour row, then neighbour column, then channel. r = 0 is the identity.
FeatureMap stack_neighbourhood(const FeatureMap& m, int radius);

struct RoiAlignResult {
  std::vector<double> values;  // P x P x f, bin-row outer
  bool outside = false;        // region did not touch the map; values are zero
};

/// RoI Align: the region is mapped to feature coordinates by dividing by the
/// stride, each of the P x P bins averages samples_per_bin^2 bilinear samples
/// taken against cell centres at (j + 0.5, i + 0.5); off-map neighbours read 0.
RoiAlignResult roi_align(const FeatureMap& m, const Box& region, int pool, int samples_per_bin);

enum class PoolMode { kFlatten, kMeanPool };

struct RegionFeature {
  std::vector<double> values;
  Box source_box;
  bool outside = false;
};

std::size_t region_feature_dim(int channels, PoolMode mode, int pool);

RegionFeature region_feature(const FeatureMap& m, const Box& region, PoolMode mode, int pool,
                             int samples_per_bin);

}  // namespace odet
