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

#include "odet/featuremap.hpp"

#include <cmath>
#include <string>

#include "odet/error.hpp"

namespace odet {

FeatureMap::FeatureMap(int h, int w, int f, int stride)
    : FeatureMap(h, w, f, stride,
                 std::vector<float>(static_cast<std::size_t>(h) * w * f, 0.0f)) {}

FeatureMap::FeatureMap(int h, int w, int f, int stride, std::vector<float> data)
    : h_(h), w_(w), f_(f), stride_(stride), data_(std::move(data)) {
  if (h <= 0 || w <= 0 || f <= 0 || stride <= 0) {
    throw DataError("feature map dimensions and stride must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(h) * w * f) {
    throw DataError("feature map data length " + std::to_string(data_.size()) +
                    " does not match h*w*f");
  }
}

void FeatureMap::validate() const {
  if (data_.size() != cells() * static_cast<std::size_t>(f_)) {
    throw DataError("feature map data length does not match h*w*f");
  }
  for (std::size_t k = 0; k < data_.size(); ++k) {
    if (!std::isfinite(data_[k])) {
      throw DataError("non-finite feature value at element " + std::to_string(k));
    }
  }
}

Matrix unroll_feature_map(const FeatureMap& m) {
  Matrix out(static_cast<Eigen::Index>(m.cells()), m.channels());
  const auto src = m.data();
  double* dst = out.data();
  for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k];
  return out;
}

FeatureMap stack_neighbourhood(const FeatureMap& m, int radius) {
  if (radius < 0) throw ConfigError("neighbourhood radius must be >= 0");
  if (radius == 0) return m;
  const int side = 2 * radius + 1;
  const int f = m.channels();
  FeatureMap out(m.height(), m.width(), f * side * side, m.stride());
  for (int i = 0; i < m.height(); ++i) {
    for (int j = 0; j < m.width(); ++j) {
      auto dst = out.cell(i, j);
      std::size_t k = 0;
      for (int di = -radius; di <= radius; ++di) {
        for (int dj = -radius; dj <= radius; ++dj, k += f) {
          const int ii = i + di;
          const int jj = j + dj;
          if (ii < 0 || jj < 0 || ii >= m.height() || jj >= m.width()) continue;
          const auto src = m.cell(ii, jj);
          std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(k));
        }
      }
    }
  }
  return out;
}

namespace {

// Bilinear read at feature coordinates (x, y) where cell (i, j) sits at
// (j + 0.5, i + 0.5). Accumulates weight * value into acc.
void bilinear_accumulate(const FeatureMap& m, double x, double y, double scale, double* acc) {
  const double u = x - 0.5;
  const double v = y - 0.5;
  const double j0f = std::floor(u);
  const double i0f = std::floor(v);
  const double fx = u - j0f;
  const double fy = v - i0f;
  const int j0 = static_cast<int>(j0f);
  const int i0 = static_cast<int>(i0f);
  const int f = m.channels();
  const double weights[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
  const int rows[4] = {i0, i0, i0 + 1, i0 + 1};
  const int cols[4] = {j0, j0 + 1, j0, j0 + 1};
  for (int n = 0; n < 4; ++n) {
    if (weights[n] == 0.0) continue;
    if (rows[n] < 0 || cols[n] < 0 || rows[n] >= m.height() || cols[n] >= m.width()) continue;
    const auto cell = m.cell(rows[n], cols[n]);
    const double wgt = weights[n] * scale;
    for (int c = 0; c < f; ++c) acc[c] += wgt * cell[c];
  }
}

}  // namespace

RoiAlignResult roi_align(const FeatureMap& m, const Box& region, int pool, int samples_per_bin) {
  if (pool < 1) throw ConfigError("roi_align pool size must be >= 1");
  if (samples_per_bin < 1) throw ConfigError("roi_align samples_per_bin must be >= 1");
  if (!region.valid()) throw DomainError("roi_align of a degenerate region");

  const int f = m.channels();
  RoiAlignResult out;
  out.values.assign(static_cast<std::size_t>(pool) * pool * f, 0.0);

  const double s = m.stride();
  const double x1 = region.x1 / s;
  const double y1 = region.y1 / s;
  const double x2 = region.x2 / s;
  const double y2 = region.y2 / s;
  if (x2 <= 0.0 || y2 <= 0.0 || x1 >= m.width() || y1 >= m.height()) {
    out.outside = true;
    return out;
  }

  const double bin_w = (x2 - x1) / pool;
  const double bin_h = (y2 - y1) / pool;
  const double scale = 1.0 / (static_cast<double>(samples_per_bin) * samples_per_bin);
  for (int by = 0; by < pool; ++by) {
    for (int bx = 0; bx < pool; ++bx) {
      double* acc = out.values.data() + (static_cast<std::size_t>(by) * pool + bx) * f;
      for (int sy = 0; sy < samples_per_bin; ++sy) {
        const double y = y1 + by * bin_h + (sy + 0.5) * bin_h / samples_per_bin;
        for (int sx = 0; sx < samples_per_bin; ++sx) {
          const double x = x1 + bx * bin_w + (sx + 0.5) * bin_w / samples_per_bin;
          bilinear_accumulate(m, x, y, scale, acc);
        }
      }
    }
  }
  return out;
}

std::size_t region_feature_dim(int channels, PoolMode mode, int pool) {
  if (mode == PoolMode::kMeanPool) return static_cast<std::size_t>(channels);
  return static_cast<std::size_t>(pool) * pool * channels;
}

RegionFeature region_feature(const FeatureMap& m, const Box& region, PoolMode mode, int pool,
                             int samples_per_bin) {
  auto pooled = roi_align(m, region, pool, samples_per_bin);
  RegionFeature out;
  out.source_box = region;
  out.outside = pooled.outside;
  if (mode == PoolMode::kFlatten) {
    out.values = std::move(pooled.values);
    return out;
  }
  const int f = m.channels();
  const int bins = pool * pool;
  out.values.assign(static_cast<std::size_t>(f), 0.0);
  for (int b = 0; b < bins; ++b) {
    for (int c = 0; c < f; ++c) out.values[c] += pooled.values[static_cast<std::size_t>(b) * f + c];
  }
  for (double& v : out.values) v /= bins;
  return out;
}

}  // namespace odet
