#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Cholesky>

#include "auxbo/gp/kernel.hpp"
#include "auxbo/model/types.hpp"

namespace auxbo::gp {

inline constexpr int kMaxJitterEscalations = 3;

struct Factorization {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;  // jitter actually added
};

/// Cholesky of K + (noise + jitter) I. On failure the jitter is multiplied
/// by 10, at most three times (1e-6 -> 1e-3 by default).
inline Factorization factorize(const Matrix& k, double noise_variance, double jitter) {
  Factorization f;
  double j = jitter;
  for (int attempt = 0; attempt <= kMaxJitterEscalations; ++attempt, j *= 10.0) {
    Matrix a = k;
    a.diagonal().array() += noise_variance + j;
    f.llt.compute(a);
    if (f.llt.info() == Eigen::Success && f.llt.matrixL().toDenseMatrix().diagonal().array().isFinite().all()) {
      f.jitter = j;
      return f;
    }
  }
  throw NumericFailure("gp: Cholesky failed after jitter escalation to " + std::to_string(j / 10.0));
}

/// Exact GP posterior at the rows of xq given training data (x, y).
/// `mean_train` / `mean_query` are the prior mean at x / xq (empty = zero mean).
/// sigma includes observation noise.
inline std::vector<GaussianPrediction> gp_posterior(const KernelConfig& cfg, const Matrix& x, const Eigen::VectorXd& y,
                                                    const Matrix& xq, const Eigen::VectorXd& mean_train = {},
                                                    const Eigen::VectorXd& mean_query = {}) {
  cfg.validate();
  require(x.rows() == y.size() && x.rows() >= 1, "gp_posterior: need one target per training design");
  require(mean_train.size() == 0 || mean_train.size() == y.size(), "gp_posterior: mean_train length mismatch");
  require(mean_query.size() == 0 || mean_query.size() == xq.rows(), "gp_posterior: mean_query length mismatch");
  const Factorization f = factorize(kernel_eval(cfg, x, x), cfg.noise_variance, cfg.jitter);
  const Eigen::VectorXd resid = mean_train.size() ? Eigen::VectorXd(y - mean_train) : y;
  const Eigen::VectorXd alpha = f.llt.solve(resid);
  const Matrix ks = kernel_eval(cfg, x, xq);  // n x q
  const Matrix v = f.llt.matrixL().solve(ks);
  std::vector<GaussianPrediction> out(static_cast<std::size_t>(xq.rows()));
  for (Eigen::Index q = 0; q < xq.rows(); ++q) {
    double mu = ks.col(q).dot(alpha);
    if (mean_query.size()) mu += mean_query(q);
    double var = cfg.signal_variance - v.col(q).squaredNorm();
    var = std::max(var, 0.0) + cfg.noise_variance;
    out[static_cast<std::size_t>(q)] = {mu, std::sqrt(var)};
  }
  return out;
}

/// log N(y | m, K + noise I), evaluated directly (no autodiff).
inline double log_marginal_likelihood(const KernelConfig& cfg, const Matrix& x, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& mean_train = {}) {
  cfg.validate();
  const Factorization f = factorize(kernel_eval(cfg, x, x), cfg.noise_variance, cfg.jitter);
  const Eigen::VectorXd r = mean_train.size() ? Eigen::VectorXd(y - mean_train) : y;
  const Eigen::VectorXd a = f.llt.solve(r);
  const Matrix lower = f.llt.matrixL();
  const double logdet = 2.0 * lower.diagonal().array().log().sum();
  return -0.5 * r.dot(a) - 0.5 * logdet - 0.5 * static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace auxbo::gp
