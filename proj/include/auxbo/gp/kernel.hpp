#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "auxbo/numerics/ops.hpp"

namespace auxbo::gp {

enum class KernelFamily { rbf, matern52 };

inline const char* family_name(KernelFamily f) { return f == KernelFamily::rbf ? "rbf" : "matern52"; }

inline std::optional<KernelFamily> parse_family(const std::string& s) {
  if (s == "rbf") return KernelFamily::rbf;
  if (s == "matern52") return KernelFamily::matern52;
  return std::nullopt;
}

/// ARD stationary kernel plus Gaussian observation noise.
struct KernelConfig {
  KernelFamily family = KernelFamily::rbf;
  std::vector<double> lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1e-2;
  double jitter = 1e-6;

  void validate() const {
    require(!lengthscales.empty(), "KernelConfig: need at least one lengthscale");
    for (double l : lengthscales) require(l > 0.0 && std::isfinite(l), "KernelConfig: lengthscales must be positive");
    require(signal_variance > 0.0, "KernelConfig: signal_variance must be positive");
    require(noise_variance > 0.0, "KernelConfig: noise_variance must be positive");
    require(jitter > 0.0, "KernelConfig: jitter must be positive");
  }
};

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Stationary profile k(r^2) / sigma_f^2.
inline double kernel_profile(KernelFamily family, double r2) {
  if (family == KernelFamily::rbf) return std::exp(-0.5 * r2);
  constexpr double s5 = 2.2360679774997896964;
  const double r = std::sqrt(std::max(r2, 0.0));
  return (1.0 + s5 * r + 5.0 * r2 / 3.0) * std::exp(-s5 * r);
}

/// Rows of x are designs; returns the n x m cross-covariance (no noise).
inline Matrix kernel_eval(const KernelConfig& cfg, const Matrix& x, const Matrix& x2) {
  cfg.validate();
  const auto d = static_cast<Eigen::Index>(cfg.lengthscales.size());
  require(x.cols() == d && x2.cols() == d, "kernel_eval: design dimension does not match lengthscales");
  Matrix out(x.rows(), x2.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x2.rows(); ++j) {
      double r2 = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double z = (x(i, k) - x2(j, k)) / cfg.lengthscales[static_cast<std::size_t>(k)];
        r2 += z * z;
      }
      out(i, j) = cfg.signal_variance * kernel_profile(cfg.family, r2);
    }
  return out;
}

inline Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  require(!rows.empty(), "to_matrix: no rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == rows.front().size(), "to_matrix: ragged rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

/// Differentiable Gram matrix between x[n,d] and x2[m,d] from log-space
/// hyperparameters: log_ls[d] and scalar log_signal.
inline Var kernel_matrix(KernelFamily family, Var x, Var x2, Var log_ls, Var log_signal) {
  Var inv_ls = ops::exp(ops::scale(log_ls, -1.0));
  Var xs = ops::mul_row(x, inv_ls);
  Var x2s = x.id == x2.id ? xs : ops::mul_row(x2, inv_ls);
  Var r2 = ops::sq_dist(xs, x2s);
  Var prof = family == KernelFamily::rbf ? ops::exp(ops::scale(r2, -0.5)) : ops::matern52_from_sq(r2);
  return ops::mul_scalar(prof, ops::exp(log_signal));
}

}  // namespace auxbo::gp
