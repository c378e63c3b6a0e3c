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

#include "odet/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "model_io.hpp"
#include "odet/error.hpp"

namespace odet {

namespace {

constexpr double kJitterScale = 1e-9;
constexpr Eigen::Index kPredictChunk = 2048;

void require_finite(const Matrix& x, const char* what) {
  if (!x.allFinite()) throw TrainingError(std::string(what) + " contains non-finite values");
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < m; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(idx[k], idx[pick(rng)]);
  }
  idx.resize(m);
  return idx;
}

}  // namespace

void KernelHyperParams::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("kernel sigma must be > 0");
  if (!(lambda > 0.0)) throw ConfigError("kernel lambda must be > 0");
  if (m_centers < 1) throw ConfigError("kernel m_centers must be >= 1");
  if (cg_max_iter < 1) throw ConfigError("kernel cg_max_iter must be >= 1");
  if (!(cg_tol > 0.0)) throw ConfigError("kernel cg_tol must be > 0");
  if (!(positive_weight > 0.0)) throw ConfigError("kernel positive_weight must be > 0");
}

double gaussian_kernel(std::span<const double> x, std::span<const double> z, double sigma) {
  if (x.size() != z.size()) throw DimensionError("gaussian_kernel dimension mismatch");
  double d2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - z[k];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

Matrix gaussian_kernel_matrix(const Matrix& a, const Matrix& b, double sigma) {
  if (a.cols() != b.cols()) throw DimensionError("kernel matrix dimension mismatch");
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Matrix k = a * b.transpose();
  const double scale = -1.0 / (2.0 * sigma * sigma);
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      const double d2 = std::max(0.0, na[i] + nb[j] - 2.0 * k(i, j));
      k(i, j) = std::exp(scale * d2);
    }
  }
  return k;
}

NystromModel::NystromModel(Matrix centers, Vector alpha, KernelHyperParams hyper, double offset)
    : centers_(std::move(centers)),
      alpha_(std::move(alpha)),
      hyper_(hyper),
      offset_(offset),
      dim_(static_cast<int>(centers_.cols())) {
  if (alpha_.size() != centers_.rows()) {
    throw DimensionError("Nystrom model: alpha length does not match the number of centers");
  }
}

NystromModel NystromModel::constant(double score, int dim, KernelHyperParams hyper) {
  NystromModel m(Matrix(0, dim), Vector(0), hyper, score);
  return m;
}

double NystromModel::score(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) throw DimensionError("score: feature dimension mismatch");
  double s = offset_;
  for (Eigen::Index j = 0; j < centers_.rows(); ++j) {
    s += alpha_[j] * gaussian_kernel(x, {centers_.row(j).data(), x.size()}, hyper_.sigma);
  }
  return s;
}

Vector NystromModel::predict(const Matrix& x) const {
  if (x.rows() > 0 && x.cols() != dim_) throw DimensionError("predict: feature dimension mismatch");
  Vector out = Vector::Constant(x.rows(), offset_);
  if (is_constant()) return out;
  for (Eigen::Index start = 0; start < x.rows(); start += kPredictChunk) {
    const Eigen::Index len = std::min(kPredictChunk, x.rows() - start);
    const Matrix k = gaussian_kernel_matrix(x.middleRows(start, len), centers_, hyper_.sigma);
    out.segment(start, len).array() += (k * alpha_).array();
  }
  return out;
}

Vector predict_scores(const NystromModel& model, const Matrix& x) { return model.predict(x); }

NystromFit fit_nystrom_krr(const Matrix& x, const Vector& y, const KernelHyperParams& hyper,
                           std::uint64_t seed) {
  hyper.validate();
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 2) throw TrainingError("Nystrom fit needs at least two samples");
  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(hyper.m_centers), n);
  auto idx = sample_without_replacement(n, m, seed);
  Matrix centers(static_cast<Eigen::Index>(m), x.cols());
  for (std::size_t k = 0; k < m; ++k) centers.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(idx[k]));
  auto fit = fit_nystrom_krr_with_centers(x, y, std::move(centers), hyper);
  fit.center_indices = std::move(idx);
  return fit;
}

NystromFit fit_nystrom_krr_with_centers(const Matrix& x, const Vector& y, Matrix centers,
                                        const KernelHyperParams& hyper) {
  hyper.validate();
  const Eigen::Index n = x.rows();
  if (n < 2) throw TrainingError("Nystrom fit needs at least two samples");
  if (y.size() != n) throw DimensionError("Nystrom fit: label count does not match samples");
  if (centers.rows() < 1) throw TrainingError("Nystrom fit needs at least one center");
  if (centers.cols() != x.cols()) throw DimensionError("Nystrom fit: center dimension mismatch");
  require_finite(x, "training features");
  require_finite(centers, "Nystrom centers");
  bool has_pos = false;
  bool has_neg = false;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (y[k] == 1.0) {
      has_pos = true;
    } else if (y[k] == -1.0) {
      has_neg = true;
    } else {
      throw TrainingError("Nystrom fit: labels must be -1 or +1");
    }
  }
  if (!has_pos || !has_neg) {
    throw TrainingError("Nystrom fit: training labels contain a single class");
  }

  const Eigen::Index m = centers.rows();
  const double nn = static_cast<double>(n);
  const Matrix knm = gaussian_kernel_matrix(x, centers, hyper.sigma);
  const Matrix kmm = gaussian_kernel_matrix(centers, centers, hyper.sigma);

  Vector weights = Vector::Ones(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (y[k] > 0) weights[k] = hyper.positive_weight;
  }

  // Kmm + eps I = T^T T,  A^T A = T T^T / M + lambda I  (T, A upper triangular).
  const double jitter = kJitterScale * kmm.trace() / static_cast<double>(m);
  Eigen::MatrixXd kmm_j = kmm;
  kmm_j.diagonal().array() += jitter;
  Eigen::LLT<Eigen::MatrixXd> llt_k(kmm_j);
  if (llt_k.info() != Eigen::Success) throw TrainingError("Cholesky of Kmm failed");
  const Eigen::MatrixXd t = llt_k.matrixU();
  Eigen::MatrixXd tt = t * t.transpose() / static_cast<double>(m);
  tt.diagonal().array() += hyper.lambda;
  Eigen::LLT<Eigen::MatrixXd> llt_a(tt);
  if (llt_a.info() != Eigen::Success) throw TrainingError("Cholesky of the preconditioner failed");
  const Eigen::MatrixXd a = llt_a.matrixU();
  const auto t_up = t.triangularView<Eigen::Upper>();
  const auto a_up = a.triangularView<Eigen::Upper>();
  const double inv_sqrt_n = 1.0 / std::sqrt(nn);

  // B = T^{-1} A^{-1} / sqrt(n).
  auto apply_b = [&](const Vector& u) -> Vector {
    Vector v = a_up.solve(u);
    return t_up.solve(v) * inv_sqrt_n;
  };
  auto apply_bt = [&](const Vector& u) -> Vector {
    Vector v = t_up.transpose().solve(u);
    return a_up.transpose().solve(v) * inv_sqrt_n;
  };
  // B^T (Knm^T D Knm + lambda n Kmm) B
  auto apply_op = [&](const Vector& beta) -> Vector {
    const Vector alpha = apply_b(beta);
    const Vector r = weights.cwiseProduct(knm * alpha);
    Vector h = knm.transpose() * r;
    h.noalias() += (hyper.lambda * nn) * (kmm * alpha);
    return apply_bt(h);
  };

  const Vector rhs = apply_bt(knm.transpose() * weights.cwiseProduct(y));
  Vector beta = Vector::Zero(m);
  Vector r = rhs;
  Vector p = r;
  double rs = r.squaredNorm();
  const double rhs_norm = std::max(rhs.norm(), 1e-300);
  FitInfo info;
  info.relative_residual = std::sqrt(rs) / rhs_norm;
  for (int it = 0; it < hyper.cg_max_iter && info.relative_residual > hyper.cg_tol; ++it) {
    const Vector ap = apply_op(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double step = rs / pap;
    beta.noalias() += step * p;
    r.noalias() -= step * ap;
    const double rs_new = r.squaredNorm();
    p = r + (rs_new / rs) * p;
    rs = rs_new;
    info.iterations = it + 1;
    info.relative_residual = std::sqrt(rs) / rhs_norm;
  }

  Vector alpha = apply_b(beta);
  if (!alpha.allFinite()) throw TrainingError("Nystrom solve produced non-finite coefficients");
  NystromFit fit;
  fit.model = NystromModel(std::move(centers), std::move(alpha), hyper);
  fit.info = info;
  return fit;
}

double RidgeModel::predict(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) != weights.size()) {
    throw DimensionError("ridge predict: feature dimension mismatch");
  }
  double s = bias;
  for (std::size_t k = 0; k < x.size(); ++k) s += weights[static_cast<Eigen::Index>(k)] * x[k];
  return s;
}

RidgeModel RidgeModel::zero(int dim, double lambda) {
  return RidgeModel{Vector::Zero(dim), 0.0, lambda};
}

DeltaRegressors fit_delta_regressors(const Matrix& x, const Matrix& targets, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("ridge lambda must be > 0");
  const Eigen::Index n = x.rows();
  if (n < 1) throw TrainingError("ridge fit needs at least one sample");
  if (targets.rows() != n || targets.cols() != 4) {
    throw DimensionError("ridge fit: targets must be n x 4");
  }
  require_finite(x, "ridge features");
  require_finite(targets, "ridge targets");

  const Eigen::RowVectorXd mx = x.colwise().mean();
  const Eigen::RowVectorXd mt = targets.colwise().mean();
  const Matrix xc = x.rowwise() - mx;
  const Matrix tc = targets.rowwise() - mt;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) throw TrainingError("ridge normal equations are singular");
  const Eigen::MatrixXd w = ldlt.solve(Eigen::MatrixXd(xc.transpose() * tc));

  DeltaRegressors out;
  for (int k = 0; k < 4; ++k) {
    out[k].weights = w.col(k);
    out[k].bias = mt[k] - mx.dot(w.col(k));
    out[k].lambda = lambda;
    if (!out[k].weights.allFinite() || !std::isfinite(out[k].bias)) {
      throw TrainingError("ridge fit produced non-finite weights");
    }
  }
  return out;
}

RidgeModel fit_rls_regressor(const Matrix& x, const Vector& t, double lambda) {
  Matrix targets = Matrix::Zero(x.rows(), 4);
  targets.col(0) = t;
  return fit_delta_regressors(x, targets, lambda)[0];
}

BoxDelta predict_delta(const DeltaRegressors& models, std::span<const double> x) {
  return BoxDelta{models[0].predict(x), models[1].predict(x), models[2].predict(x),
                  models[3].predict(x)};
}

namespace detail {

void write_hyper(ByteWriter& w, const KernelHyperParams& h) {
  w.f64(h.sigma);
  w.f64(h.lambda);
  w.u32(static_cast<std::uint32_t>(h.m_centers));
  w.u32(static_cast<std::uint32_t>(h.cg_max_iter));
  w.f64(h.cg_tol);
  w.f64(h.positive_weight);
}

KernelHyperParams read_hyper(ByteReader& r) {
  KernelHyperParams h;
  h.sigma = r.f64("sigma");
  h.lambda = r.f64("lambda");
  h.m_centers = static_cast<int>(r.u32("m_centers"));
  h.cg_max_iter = static_cast<int>(r.u32("cg_max_iter"));
  h.cg_tol = r.f64("cg_tol");
  h.positive_weight = r.f64("positive_weight");
  return h;
}

void write_nystrom(ByteWriter& w, const NystromModel& model) {
  w.magic(std::string_view(kKernelMagic, 5));
  w.u32(kKindNystrom);
  w.u32(static_cast<std::uint32_t>(model.centers().rows()));
  w.u32(static_cast<std::uint32_t>(model.dim()));
  write_hyper(w, model.hyper());
  w.f64(model.offset());
  const Matrix& c = model.centers();
  for (Eigen::Index k = 0; k < c.size(); ++k) w.f64(c.data()[k]);
  for (Eigen::Index k = 0; k < model.alpha().size(); ++k) w.f64(model.alpha()[k]);
}

NystromModel read_nystrom(ByteReader& r) {
  r.expect_magic(std::string_view(kKernelMagic, 5));
  const std::size_t at = r.offset();
  if (r.u32("kind") != kKindNystrom) r.fail("blob is not a Nystrom model", at);
  const auto m = r.u32("centers");
  const auto d = r.u32("dim");
  const KernelHyperParams h = read_hyper(r);
  const double offset = r.f64("offset");
  const std::size_t need = (static_cast<std::size_t>(m) * d + m) * 8;
  if (r.remaining() < need) r.fail("truncated Nystrom payload", r.offset());
  Matrix c(m, d);
  for (Eigen::Index k = 0; k < c.size(); ++k) c.data()[k] = r.f64("center");
  Vector alpha(m);
  for (Eigen::Index k = 0; k < alpha.size(); ++k) alpha[k] = r.f64("alpha");
  return NystromModel(std::move(c), std::move(alpha), h, offset);
}

void write_ridge(ByteWriter& w, const RidgeModel& model) {
  w.magic(std::string_view(kKernelMagic, 5));
  w.u32(kKindRidge);
  w.u32(static_cast<std::uint32_t>(model.weights.size()));
  w.f64(model.lambda);
  w.f64(model.bias);
  for (Eigen::Index k = 0; k < model.weights.size(); ++k) w.f64(model.weights[k]);
}

RidgeModel read_ridge(ByteReader& r) {
  r.expect_magic(std::string_view(kKernelMagic, 5));
  const std::size_t at = r.offset();
  if (r.u32("kind") != kKindRidge) r.fail("blob is not a ridge model", at);
  const auto d = r.u32("dim");
  RidgeModel out;
  out.lambda = r.f64("lambda");
  out.bias = r.f64("bias");
  if (r.remaining() < static_cast<std::size_t>(d) * 8) r.fail("truncated ridge payload", r.offset());
  out.weights.resize(d);
  for (Eigen::Index k = 0; k < out.weights.size(); ++k) out.weights[k] = r.f64("weight");
  return out;
}

}  // namespace detail

std::vector<std::uint8_t> serialize(const NystromModel& model) {
  detail::ByteWriter w;
  detail::write_nystrom(w, model);
  return std::move(w.bytes());
}

std::vector<std::uint8_t> serialize(const RidgeModel& model) {
  detail::ByteWriter w;
  detail::write_ridge(w, model);
  return std::move(w.bytes());
}

NystromModel deserialize_nystrom(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes.data(), bytes.size(), "Nystrom model");
  return detail::read_nystrom(r);
}

RidgeModel deserialize_ridge(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes.data(), bytes.size(), "ridge model");
  return detail::read_ridge(r);
}

}  // namespace odet
