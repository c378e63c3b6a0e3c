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

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "odet/featuremap.hpp"
#include "odet/geometry.hpp"

namespace odet {

struct KernelHyperParams {
  double sigma = 1.0;         // Gaussian bandwidth
  double lambda = 1e-3;       // regularizer
  int m_centers = 2000;       // Nystrom subsample cap; M = min(m_centers, n)
  int cg_max_iter = 100;
  double cg_tol = 1e-8;       // relative residual of the preconditioned system
  double positive_weight = 1.0;  // loss weight of +1 samples

  void validate() const;
};

/// exp(-||x - z||^2 / (2 sigma^2)).
double gaussian_kernel(std::span<const double> x, std::span<const double> z, double sigma);

/// Kernel matrix K(a_i, b_j) for row sample sets.
Matrix gaussian_kernel_matrix(const Matrix& a, const Matrix& b, double sigma);

/// Nystrom kernel classifier: score(x) = sum_j alpha_j k(x, c_j) + offset.
/// offset is zero for fitted models; a centre-less model with a negative
/// offset is the always-negative classifier used for untrainable anchors/classes.
class NystromModel {
 public:
  NystromModel() = default;
  NystromModel(Matrix centers, Vector alpha, KernelHyperParams hyper, double offset = 0.0);

  static NystromModel constant(double score, int dim, KernelHyperParams hyper = {});

  const Matrix& centers() const { return centers_; }
  const Vector& alpha() const { return alpha_; }
  const KernelHyperParams& hyper() const { return hyper_; }
  double offset() const { return offset_; }
  int dim() const { return dim_; }
  bool is_constant() const { return centers_.rows() == 0; }

  double score(std::span<const double> x) const;
  Vector predict(const Matrix& x) const;

 private:
  Matrix centers_;
  Vector alpha_;
  KernelHyperParams hyper_;
  double offset_ = 0.0;
  int dim_ = 0;
};

struct FitInfo {
  int iterations = 0;
  double relative_residual = 0.0;
};

struct NystromFit {
  NystromModel model;
  FitInfo info;
  std::vector<std::size_t> center_indices;
};

/// Nystrom regularized least squares with labels in {-1, +1}. Centres are a
/// seeded uniform subsample of min(m_centers, n) rows without replacement;
/// alpha solves (Knm^T D Knm / n + lambda Kmm) alpha = Knm^T D y / n by
/// conjugate gradient with the FALKON preconditioner built from
/// chol(Kmm + jitter I), jitter = 1e-9 trace(Kmm) / M. D holds the per-sample
/// loss weights (positive_weight for +1 samples, 1 otherwise).
NystromFit fit_nystrom_krr(const Matrix& x, const Vector& y, const KernelHyperParams& hyper,
                           std::uint64_t seed);

/// Same solver with caller-chosen centres.
NystromFit fit_nystrom_krr_with_centers(const Matrix& x, const Vector& y, Matrix centers,
                                        const KernelHyperParams& hyper);

Vector predict_scores(const NystromModel& model, const Matrix& x);

/// Ridge regressor t ~ w.x + b, bias unregularized.
struct RidgeModel {
  Vector weights;
  double bias = 0.0;
  double lambda = 0.0;

  double predict(std::span<const double> x) const;
  static RidgeModel zero(int dim, double lambda);
};

using DeltaRegressors = std::array<RidgeModel, 4>;

/// Solves min ||Xw + b - t||^2 + lambda ||w||^2 through the normal equations
/// of the centred data.
RidgeModel fit_rls_regressor(const Matrix& x, const Vector& t, double lambda);

/// Four regressors (tx, ty, tw, th) sharing one factorization; targets is n x 4.
DeltaRegressors fit_delta_regressors(const Matrix& x, const Matrix& targets, double lambda);

BoxDelta predict_delta(const DeltaRegressors& models, std::span<const double> x);

// Versioned binary blobs: magic "OKRR1", u32 kind (1 Nystrom, 2 ridge),
// then little-endian fields; see README for the full layout.
std::vector<std::uint8_t> serialize(const NystromModel& model);
std::vector<std::uint8_t> serialize(const RidgeModel& model);
NystromModel deserialize_nystrom(std::span<const std::uint8_t> bytes);
RidgeModel deserialize_ridge(std::span<const std::uint8_t> bytes);

}  // namespace odet
