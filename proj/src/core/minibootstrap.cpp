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

#include "odet/minibootstrap.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "odet/error.hpp"

namespace odet {

namespace {

Matrix read_rows(const NegativePool& pool, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), pool.dim());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    pool.read_row(idx[k], {out.row(static_cast<Eigen::Index>(k)).data(),
                           static_cast<std::size_t>(pool.dim())});
  }
  return out;
}

NystromFit fit_on(const Matrix& positives, const Matrix& negatives, const KernelHyperParams& hyper,
                  std::uint64_t seed) {
  Matrix x(positives.rows() + negatives.rows(), positives.cols());
  x << positives, negatives;
  Vector y(x.rows());
  y.head(positives.rows()).setOnes();
  y.tail(negatives.rows()).setConstant(-1.0);
  return fit_nystrom_krr(x, y, hyper, seed);
}

}  // namespace

void MinibootstrapConfig::validate() const {
  if (n_batches < 1) throw ConfigError("minibootstrap n_batches must be >= 1");
  if (batch_size < 1) throw ConfigError("minibootstrap batch_size must be >= 1");
  if (max_hard_set < 0) throw ConfigError("minibootstrap max_hard_set must be >= 0");
}

void MatrixPool::read_row(std::size_t index, std::span<double> out) const {
  const auto row = rows_.row(static_cast<Eigen::Index>(index));
  std::copy(row.data(), row.data() + rows_.cols(), out.begin());
}

void LoggingPool::read_row(std::size_t index, std::span<double> out) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    log_.push_back(index);
  }
  inner_.read_row(index, out);
}

std::vector<std::size_t> LoggingPool::reads() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_;
}

std::size_t LoggingPool::distinct_reads() const {
  std::lock_guard<std::mutex> lock(mu_);
  return std::set<std::size_t>(log_.begin(), log_.end()).size();
}

std::vector<std::vector<std::size_t>> partition_negatives(std::size_t n_negatives,
                                                          const MinibootstrapConfig& cfg) {
  cfg.validate();
  const std::size_t budget = static_cast<std::size_t>(cfg.n_batches) * cfg.batch_size;
  const std::size_t take = std::min(budget, n_negatives);

  // Partial Fisher-Yates over an implicit identity permutation.
  std::vector<std::size_t> perm(n_negatives);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t k = 0; k < take; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n_negatives - 1);
    std::swap(perm[k], perm[pick(rng)]);
  }

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < take; start += cfg.batch_size) {
    const std::size_t end = std::min(take, start + static_cast<std::size_t>(cfg.batch_size));
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

MinibootstrapResult run_minibootstrap(const Matrix& positives, const NegativePool& pool,
                                      const MinibootstrapConfig& cfg,
                                      const KernelHyperParams& hyper) {
  cfg.validate();
  hyper.validate();
  if (positives.rows() < 1) throw TrainingError("minibootstrap needs at least one positive");
  if (pool.size() < 1) throw TrainingError("minibootstrap needs at least one negative");
  if (positives.cols() != pool.dim()) {
    throw DimensionError("minibootstrap: positive and negative dimensions differ");
  }

  MinibootstrapResult result;
  MinibootstrapState& st = result.state;
  st.batches = partition_negatives(pool.size(), cfg);
  const std::size_t cap = static_cast<std::size_t>(cfg.effective_max_hard_set());
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);

  // Iteration 0: hard set = batch 0, subsampled to capacity.
  std::vector<std::size_t> first = st.batches.front();
  if (first.size() > cap) {
    std::shuffle(first.begin(), first.end(), rng);
    first.resize(cap);
    std::sort(first.begin(), first.end());
  }
  const Matrix first_rows = read_rows(pool, first);
  st.hard_rows = first_rows;
  for (std::size_t idx : first) {
    st.hard_set.push_back({idx, 0, std::numeric_limits<double>::quiet_NaN()});
  }
  result.trace.push_back({0, 0, first.size(), 0, first.size(), 0, 0.0});

  const std::uint64_t fit_seed = cfg.seed + 0x51ED2701ULL;
  for (int t = 1; t < static_cast<int>(st.batches.size()); ++t) {
    st.iteration = t;
    const std::size_t n_hard = st.hard_set.size();
    MinibootstrapTraceLine line{t, t, 0, 0, 0, 0, 0.0};
    Vector hard_scores;
    NystromModel model;
    if (n_hard == 0) {
      model = NystromModel::constant(1.0, static_cast<int>(positives.cols()), hyper);
    } else {
      auto fit = fit_on(positives, st.hard_rows, hyper, fit_seed + static_cast<std::uint64_t>(t));
      line.cg_iterations = fit.info.iterations;
      line.fit_residual = fit.info.relative_residual;
      model = std::move(fit.model);
      hard_scores = model.predict(st.hard_rows);
    }

    const auto& batch = st.batches[static_cast<std::size_t>(t)];
    const Matrix rows = read_rows(pool, batch);
    const Vector scores = model.predict(rows);

    std::vector<double> all_scores(hard_scores.data(), hard_scores.data() + hard_scores.size());
    std::vector<std::size_t> added;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      if (scores[static_cast<Eigen::Index>(k)] >= cfg.hard_threshold) added.push_back(k);
    }
    line.additions = added.size();

    Matrix merged(static_cast<Eigen::Index>(n_hard + added.size()), pool.dim());
    if (n_hard > 0) merged.topRows(static_cast<Eigen::Index>(n_hard)) = st.hard_rows;
    for (std::size_t k = 0; k < added.size(); ++k) {
      const auto src = static_cast<Eigen::Index>(added[k]);
      merged.row(static_cast<Eigen::Index>(n_hard + k)) = rows.row(src);
      st.hard_set.push_back({batch[added[k]], t, scores[src]});
      all_scores.push_back(scores[src]);
    }

    if (st.hard_set.size() > cap) {
      // Keep the `cap` highest-scoring rows; ties resolved by position.
      std::vector<std::size_t> order(st.hard_set.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return all_scores[a] > all_scores[b]; });
      order.resize(cap);
      std::sort(order.begin(), order.end());
      line.evictions = st.hard_set.size() - cap;
      Matrix kept(static_cast<Eigen::Index>(cap), pool.dim());
      std::vector<HardNegativeAdmission> kept_set;
      kept_set.reserve(cap);
      for (std::size_t k = 0; k < order.size(); ++k) {
        kept.row(static_cast<Eigen::Index>(k)) = merged.row(static_cast<Eigen::Index>(order[k]));
        kept_set.push_back(st.hard_set[order[k]]);
      }
      merged = std::move(kept);
      st.hard_set = std::move(kept_set);
    }
    st.hard_rows = std::move(merged);
    line.hard_set_size = st.hard_set.size();
    result.trace.push_back(line);
  }

  Matrix final_negatives = st.hard_rows;
  if (st.hard_set.empty()) {
    final_negatives = first_rows;
    st.fell_back_to_first_batch = true;
  }
  auto fit = fit_on(positives, final_negatives, hyper, fit_seed);
  result.model = std::move(fit.model);
  MinibootstrapTraceLine last{static_cast<int>(st.batches.size()), -1, 0, 0,
                              static_cast<std::size_t>(final_negatives.rows()),
                              fit.info.iterations, fit.info.relative_residual};
  result.trace.push_back(last);
  return result;
}

}  // namespace odet
