#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "auxbo/numerics/autodiff.hpp"
#include "auxbo/numerics/ops.hpp"

namespace auxbo {

/// Negative log density of y under N(mu, sigma^2).
inline double gaussian_nll(double y, double mu, double sigma) {
  require(sigma > 0.0, "gaussian_nll: sigma must be positive");
  const double z = (y - mu) / sigma;
  return 0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma) + 0.5 * z * z;
}

/// Standard normal CDF via erfc (accurate in both tails).
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * (1.0 / std::numbers::sqrt2)); }

namespace ops {

/// Sum over k of gaussian_nll(y_k, mu_k, sigma_k); mu and sigma are length-n vars.
inline Var gaussian_nll_sum(std::span<const double> y, Var mu, Var sigma) {
  const std::size_t n = y.size();
  require(mu.numel() == n && sigma.numel() == n, "gaussian_nll_sum: length mismatch");
  const auto& md = mu.value().data;
  const auto& sd = sigma.value().data;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(md[i]) || !std::isfinite(sd[i]))
      throw NumericFailure("gaussian_nll_sum: non-finite prediction at target " + std::to_string(i));
    total += gaussian_nll(y[i], md[i], sd[i]);
  }
  std::vector<double> yv(y.begin(), y.end());
  return mu.tape->record(Tensor::scalar(total), {mu, sigma}, [mu, sigma, yv = std::move(yv)](Tape& t, int self) {
    const double g = t.grad(self)[0];
    const auto& md = t.value(mu.id).data;
    const auto& sd = t.value(sigma.id).data;
    const bool wm = t.needs_grad(mu.id), ws = t.needs_grad(sigma.id);
    for (std::size_t i = 0; i < yv.size(); ++i) {
      const double r = yv[i] - md[i];
      const double s2 = sd[i] * sd[i];
      if (wm) t.grad(mu.id)[i] += g * (-r / s2);
      if (ws) t.grad(sigma.id)[i] += g * (1.0 / sd[i] - r * r / (s2 * sd[i]));
    }
  });
}

/// Gaussian log marginal likelihood log N(r | 0, K) for a positive-definite
/// K[n,n] and residual r[n], computed through a Cholesky factorization.
/// Backward uses dL/dK = (a a^T - K^-1) / 2 and dL/dr = -a with a = K^-1 r.
/// Throws NumericFailure when K is not numerically positive definite.
inline Var gaussian_log_marginal(Var k, Var r) {
  const std::size_t n = k.rows();
  require(k.cols() == n && r.numel() == n, "gaussian_log_marginal: shape mismatch");
  using Mat = Eigen::MatrixXd;
  Mat km = detail::mat(k.value().data, n, n);
  Eigen::LLT<Mat> llt(km);
  if (llt.info() != Eigen::Success) throw NumericFailure("gaussian_log_marginal: Cholesky failed");
  const Mat& lower = llt.matrixLLT();
  double logdet = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dii = lower(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    if (!(dii > 0.0) || !std::isfinite(dii)) throw NumericFailure("gaussian_log_marginal: Cholesky failed");
    logdet += 2.0 * std::log(dii);
  }
  Eigen::VectorXd rv = Eigen::Map<const Eigen::VectorXd>(r.value().data.data(), static_cast<Eigen::Index>(n));
  Eigen::VectorXd alpha = llt.solve(rv);
  const double value =
      -0.5 * rv.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(value)) throw NumericFailure("gaussian_log_marginal: non-finite likelihood");
  std::vector<double> a(alpha.data(), alpha.data() + n);
  return k.tape->record(Tensor::scalar(value), {k, r}, [k, r, n, llt, a = std::move(a)](Tape& t, int self) {
    const double g = t.grad(self)[0];
    if (t.needs_grad(k.id)) {
      Mat kinv = llt.solve(Mat::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
      auto& gk = t.grad(k.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          gk[i * n + j] +=
              g * 0.5 * (a[i] * a[j] - kinv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    if (t.needs_grad(r.id)) {
      auto& gr = t.grad(r.id);
      for (std::size_t i = 0; i < n; ++i) gr[i] -= g * a[i];
    }
  });
}

}  // namespace ops
}  // namespace auxbo
