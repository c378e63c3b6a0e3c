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
#include <functional>
#include <mutex>
#include <span>
#include <vector>

#include "odet/kernel.hpp"

namespace odet {

struct MinibootstrapConfig {
  int n_batches = 10;       // nB
  int batch_size = 2000;    // BS
  double hard_threshold = 0.0;
  int max_hard_set = 0;     // 0 means n_batches * batch_size
  std::uint64_t seed = 0;

  int effective_max_hard_set() const {
    return max_hard_set > 0 ? max_hard_set : n_batches * batch_size;
  }
  void validate() const;
};

/// Random-access source of negative rows. Implementations must tolerate
/// concurrent read_row calls.
class NegativePool {
 public:
  virtual ~NegativePool() = default;
  virtual std::size_t size() const = 0;
  virtual int dim() const = 0;
  virtual void read_row(std::size_t index, std::span<double> out) const = 0;
};

/// Pool over the rows of an in-memory matrix.
class MatrixPool final : public NegativePool {
 public:
  explicit MatrixPool(const Matrix& rows) : rows_(rows) {}
  std::size_t size() const override { return static_cast<std::size_t>(rows_.rows()); }
  int dim() const override { return static_cast<int>(rows_.cols()); }
  void read_row(std::size_t index, std::span<double> out) const override;

 private:
  const Matrix& rows_;
};

/// Pool backed by a callback that materializes one row on demand.
class CallbackPool final : public NegativePool {
 public:
  using Reader = std::function<void(std::size_t, std::span<double>)>;
  CallbackPool(std::size_t size, int dim, Reader reader)
      : size_(size), dim_(dim), reader_(std::move(reader)) {}
  std::size_t size() const override { return size_; }
  int dim() const override { return dim_; }
  void read_row(std::size_t index, std::span<double> out) const override { reader_(index, out); }

 private:
  std::size_t size_;
  int dim_;
  Reader reader_;
};

/// Wraps a pool and records every index read.
class LoggingPool final : public NegativePool {
 public:
  explicit LoggingPool(const NegativePool& inner) : inner_(inner) {}
  std::size_t size() const override { return inner_.size(); }
  int dim() const override { return inner_.dim(); }
  void read_row(std::size_t index, std::span<double> out) const override;

  std::vector<std::size_t> reads() const;
  std::size_t distinct_reads() const;

 private:
  const NegativePool& inner_;
  mutable std::mutex mu_;
  mutable std::vector<std::size_t> log_;
};

/// Seeded disjoint batches drawn uniformly from [0, n_negatives). Batch sizes
/// are min(batch_size, remaining); fewer batches when the pool runs out.
std::vector<std::vector<std::size_t>> partition_negatives(std::size_t n_negatives,
                                                          const MinibootstrapConfig& cfg);

struct HardNegativeAdmission {
  std::size_t pool_index = 0;
  int batch = 0;
  double admission_score = 0.0;  // NaN for batch-0 rows
};

struct MinibootstrapTraceLine {
  int iteration = 0;
  int batch = 0;
  std::size_t additions = 0;
  std::size_t evictions = 0;
  std::size_t hard_set_size = 0;
  int cg_iterations = 0;
  double fit_residual = 0.0;
};

struct MinibootstrapState {
  std::vector<std::vector<std::size_t>> batches;
  std::vector<HardNegativeAdmission> hard_set;  // parallel to hard_rows
  Matrix hard_rows;
  int iteration = 0;
  bool fell_back_to_first_batch = false;
};

struct MinibootstrapResult {
  NystromModel model;
  MinibootstrapState state;
  std::vector<MinibootstrapTraceLine> trace;
};

/// Approximated hard-negative mining. The hard set starts as batch 0; each
/// later batch is scored by a model fit on positives (+1) and the current hard
/// set (-1), and rows scoring >= hard_threshold are admitted. Over capacity,
/// the lowest-scoring hard negatives are evicted. Only rows of the selected
/// batches are ever read from the pool.
MinibootstrapResult run_minibootstrap(const Matrix& positives, const NegativePool& pool,
                                      const MinibootstrapConfig& cfg,
                                      const KernelHyperParams& hyper);

}  // namespace odet
